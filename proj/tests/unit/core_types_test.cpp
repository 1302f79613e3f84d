#include <doctest.h>

#include "capforge/core_types.hpp"
#include "test_support.hpp"

using namespace capforge;
using capforge::testing::make_asset;

TEST_SUITE("core_types")
{
  TEST_CASE("unit box record is valid")
  {
    AssetRecord a;
    a.uid = "a";
    a.bbox_min = {0, 0, 0};
    a.bbox_max = {1, 1, 1};
    CHECK(validate_asset(a).empty());
  }

  TEST_CASE("empty uid is reported")
  {
    AssetRecord a;
    a.bbox_max = {1, 1, 1};
    CHECK(validate_asset(a) == std::vector<std::string>{"uid empty"});
  }

  TEST_CASE("image and camera counts must agree")
  {
    auto a = make_asset("a");
    a.image_paths.assign(8, "x.png");
    a.camera_poses.assign(7, CameraPose{});
    CHECK(validate_asset(a) == std::vector<std::string>{"images/cameras length mismatch"});
    a.camera_poses.emplace_back();
    CHECK(validate_asset(a).empty());
  }

  TEST_CASE("inverted bbox axes are named")
  {
    auto a = make_asset("a");
    a.bbox_min = {0, 5, 0};
    a.bbox_max = {1, 1, -1};
    CHECK(validate_asset(a) == std::vector<std::string>{"bbox_min.y > bbox_max.y", "bbox_min.z > bbox_max.z"});
  }

  TEST_CASE("bad pose fields are named")
  {
    auto a = make_asset("a");
    a.camera_poses = {CameraPose{0, 0, 0.0, 512}, CameraPose{0, 0, 1.0, 0}};
    const auto problems = validate_asset(a);
    REQUIRE(problems.size() == 2);
    CHECK(problems[0] == "camera_poses[0].radius must be > 0");
    CHECK(problems[1] == "camera_poses[1].resolution must be > 0");
  }

  TEST_CASE("manifest validation catches duplicate uids")
  {
    const auto problems = validate_manifest({make_asset("a"), make_asset("b"), make_asset("a")});
    CHECK(problems == std::vector<std::string>{"a: uid duplicated"});
  }

  TEST_CASE("license parsing is total and case-insensitive")
  {
    CHECK(parse_license("CC0") == LicenseClass::CC0);
    CHECK(parse_license("cc-by-4.0") == LicenseClass::CC_BY);
    CHECK(parse_license("CC BY-SA") == LicenseClass::CC_BY_SA);
    CHECK(parse_license("by-nc") != LicenseClass::CC_BY);
    CHECK(parse_license("CC-BY-NC-SA 3.0") == LicenseClass::CC_BY_NC_SA);
    CHECK(parse_license("cc_by_nc") == LicenseClass::CC_BY_NC);
    CHECK(parse_license("") == LicenseClass::OTHER);
    CHECK(parse_license("proprietary") == LicenseClass::OTHER);
    for (auto l : {LicenseClass::CC_BY, LicenseClass::CC_BY_SA, LicenseClass::CC0, LicenseClass::CC_BY_NC,
                   LicenseClass::CC_BY_NC_SA, LicenseClass::OTHER}) {
      CHECK(parse_license(render_license(l)) == l);
    }
  }

  TEST_CASE("default config holds the published defaults")
  {
    const PipelineConfig c;
    CHECK(c.views_per_object == 8);
    CHECK(c.samples_per_view == 5);
    CHECK(c.selection_embedding_dim == 512);
    CHECK(c.detector_threshold == 0.9);
    CHECK(c.license_allowlist == std::set<LicenseClass>{LicenseClass::CC_BY, LicenseClass::CC_BY_SA, LicenseClass::CC0});
    CHECK(validate_config(c).empty());
  }

  TEST_CASE("config invariants")
  {
    PipelineConfig c;
    c.views_per_object = 0;
    c.detector_threshold = 1.5;
    c.license_allowlist.clear();
    const auto problems = validate_config(c);
    CHECK(problems.size() == 3);
  }

  TEST_CASE("caption mode round trip")
  {
    CHECK(parse_caption_mode(render_caption_mode(CaptionMode::QA)) == CaptionMode::QA);
    CHECK(parse_caption_mode(render_caption_mode(CaptionMode::STANDARD)) == CaptionMode::STANDARD);
    CHECK_FALSE(parse_caption_mode("qa-ish").has_value());
  }
}
