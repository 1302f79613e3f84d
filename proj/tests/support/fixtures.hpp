#pragma once

#include <map>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "capforge/core_types.hpp"
#include "capforge/ethics_filter.hpp"
#include "test_support.hpp"

namespace capforge::testing {

/// 1000 assets: 100 non-commercial licenses, then 50 without camera info,
/// then 20 detector hits (one exactly at the threshold), then 5 captions
/// with a blocked term. The 825 survivors include near-threshold scores
/// (0.89) and substring traps ("grape" against "rape").
struct FilterFixture {
  std::vector<AssetRecord> assets;
  std::map<std::string, std::string> captions;
  std::map<std::string, DetectorScores> scores;
  Blocklist blocklist;
  std::string exact_threshold_uid;
  std::string below_threshold_uid;
};

inline auto make_filter_fixture() -> FilterFixture
{
  FilterFixture f;
  f.blocklist = Blocklist({"rape", "gore", "swastika"});
  for (int i = 0; i < 1000; ++i) {
    const auto uid = fmt::format("asset-{:04}", i);
    auto a = make_asset(uid, i % 3 == 0 ? LicenseClass::CC0 : (i % 3 == 1 ? LicenseClass::CC_BY : LicenseClass::CC_BY_SA));
    std::string caption = fmt::format("a wooden chair number {}", i);
    DetectorScores s{uid, 0.1, 0.05};
    if (i < 100) {
      a.license = i % 2 == 0 ? LicenseClass::CC_BY_NC : LicenseClass::CC_BY_NC_SA;
    } else if (i < 150) {
      a.has_camera_info = false;
    } else if (i < 170) {
      if (i == 150) {
        s.face_score = 0.9;
        f.exact_threshold_uid = uid;
      } else if (i % 2 == 0) {
        s.face_score = 0.95;
      } else {
        s.nsfw_score = 0.97;
      }
    } else if (i < 175) {
      caption = i == 170 ? "Gore splattered statue" : fmt::format("a statue with a swastika {}", i);
    } else if (i < 200) {
      s.face_score = 0.89;
      s.nsfw_score = 0.89;
      if (i == 175) {
        f.below_threshold_uid = uid;
      }
      caption = fmt::format("a bunch of grapes on a plate {}", i);
    }
    f.assets.push_back(std::move(a));
    f.captions[uid] = std::move(caption);
    f.scores[uid] = s;
  }
  return f;
}

}  // namespace capforge::testing
