#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace capforge {

using Vec3 = std::array<double, 3>;

enum class LicenseClass { CC_BY, CC_BY_SA, CC0, CC_BY_NC, CC_BY_NC_SA, OTHER };

/// Total, case-insensitive. Separators (space, '-', '_') are interchangeable
/// and trailing version suffixes ("4.0", "1.0") are ignored; anything
/// unrecognised is OTHER.
auto parse_license(std::string_view text) -> LicenseClass;
auto render_license(LicenseClass license) -> std::string_view;

struct CameraPose {
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;
  double radius = 1.0;
  int resolution = 512;

  friend auto operator==(const CameraPose&, const CameraPose&) -> bool = default;
};

/// One asset of the manifest. Large artifacts are relative path references.
struct AssetRecord {
  std::string uid;
  LicenseClass license = LicenseClass::OTHER;
  Vec3 bbox_min{0.0, 0.0, 0.0};
  Vec3 bbox_max{0.0, 0.0, 0.0};
  bool has_camera_info = false;
  std::vector<std::string> image_paths;
  std::vector<CameraPose> camera_poses;
  std::vector<std::string> captions;
  std::optional<std::string> point_cloud_ref;
  std::optional<std::string> latent_code_ref;

  friend auto operator==(const AssetRecord&, const AssetRecord&) -> bool = default;
};

inline constexpr std::string_view kDefaultSummaryPrompt =
    "Given a set of descriptions about the same 3D object, distill these descriptions into one "
    "concise caption. The descriptions are as follows: '{captions}'. Avoid describing background, "
    "surface, and posture. The caption should be:";
inline constexpr std::string_view kDefaultQaPrompt1 = "Question: what object is in this image? Answer:";
inline constexpr std::string_view kDefaultQaPrompt2 =
    "Question: what is the structure and geometry of this <object>?";

struct PipelineConfig {
  int views_per_object = 8;
  int samples_per_view = 5;
  int selection_embedding_dim = 512;
  double detector_threshold = 0.9;
  std::set<LicenseClass> license_allowlist{LicenseClass::CC_BY, LicenseClass::CC_BY_SA, LicenseClass::CC0};
  bool qa_mode = false;
  std::string summary_prompt_template{kDefaultSummaryPrompt};
  std::string qa_prompt_1{kDefaultQaPrompt1};
  std::string qa_prompt_2{kDefaultQaPrompt2};
  std::string blocklist_path;

  double nucleus_p = 0.9;
  std::uint64_t seed = 0;

  // Camera rig.
  double elevation_above_deg = 20.0;
  double elevation_below_deg = -10.0;
  double camera_radius = 2.2;
  int render_resolution = 512;
  std::string lighting_preset = "key-fill-rim";
};

/// Violations of the PipelineConfig invariants; empty when valid.
auto validate_config(const PipelineConfig& config) -> std::vector<std::string>;

struct CandidateCaption {
  std::string text;
  int view_index = 0;
  int sample_index = 0;

  friend auto operator==(const CandidateCaption&, const CandidateCaption&) -> bool = default;
};

struct ViewCaption {
  std::string text;
  int view_index = 0;
  double cosine_score = 0.0;

  friend auto operator==(const ViewCaption&, const ViewCaption&) -> bool = default;
};

enum class CaptionMode { STANDARD, QA };

auto render_caption_mode(CaptionMode mode) -> std::string_view;
auto parse_caption_mode(std::string_view text) -> std::optional<CaptionMode>;

struct FinalCaption {
  std::string uid;
  std::string text;
  std::vector<ViewCaption> source_view_captions;
  CaptionMode mode = CaptionMode::STANDARD;

  friend auto operator==(const FinalCaption&, const FinalCaption&) -> bool = default;
};

/// Checks every AssetRecord invariant. Each message names the field and the
/// rule it breaks. The list is empty iff the record is valid.
auto validate_asset(const AssetRecord& record) -> std::vector<std::string>;

/// Validates a whole manifest: per-record violations (prefixed by uid) plus
/// uid uniqueness.
auto validate_manifest(const std::vector<AssetRecord>& records) -> std::vector<std::string>;

}  // namespace capforge
