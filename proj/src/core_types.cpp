#include "capforge/core_types.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_set>

#include <fmt/format.h>

namespace capforge {

namespace {

// Uppercases, maps separators to '_', drops a trailing version number.
auto normalize_license_text(std::string_view text) -> std::string
{
  std::string out;
  for (const char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (c == ' ' || c == '-' || c == '_') {
      if (!out.empty() && out.back() != '_') {
        out.push_back('_');
      }
    } else {
      out.push_back(static_cast<char>(std::toupper(uc)));
    }
  }
  while (!out.empty() && out.back() == '_') {
    out.pop_back();
  }
  // "CC_BY_4.0" -> "CC_BY"
  if (const auto pos = out.rfind('_'); pos != std::string::npos) {
    const std::string_view tail(out.data() + pos + 1, out.size() - pos - 1);
    const bool is_version = !tail.empty() && std::all_of(tail.begin(), tail.end(), [](char c) {
      return std::isdigit(static_cast<unsigned char>(c)) || c == '.';
    });
    if (is_version) {
      out.resize(pos);
    }
  }
  return out;
}

}  // namespace

auto parse_license(std::string_view text) -> LicenseClass
{
  const std::string key = normalize_license_text(text);
  if (key == "CC_BY") return LicenseClass::CC_BY;
  if (key == "CC_BY_SA") return LicenseClass::CC_BY_SA;
  if (key == "CC0" || key == "CC_0") return LicenseClass::CC0;
  if (key == "CC_BY_NC") return LicenseClass::CC_BY_NC;
  if (key == "CC_BY_NC_SA") return LicenseClass::CC_BY_NC_SA;
  return LicenseClass::OTHER;
}

auto render_license(LicenseClass license) -> std::string_view
{
  switch (license) {
    case LicenseClass::CC_BY: return "CC_BY";
    case LicenseClass::CC_BY_SA: return "CC_BY_SA";
    case LicenseClass::CC0: return "CC0";
    case LicenseClass::CC_BY_NC: return "CC_BY_NC";
    case LicenseClass::CC_BY_NC_SA: return "CC_BY_NC_SA";
    case LicenseClass::OTHER: return "OTHER";
  }
  return "OTHER";
}

auto render_caption_mode(CaptionMode mode) -> std::string_view
{
  return mode == CaptionMode::QA ? "QA" : "STANDARD";
}

auto parse_caption_mode(std::string_view text) -> std::optional<CaptionMode>
{
  if (text == "STANDARD") return CaptionMode::STANDARD;
  if (text == "QA") return CaptionMode::QA;
  return std::nullopt;
}

auto validate_config(const PipelineConfig& config) -> std::vector<std::string>
{
  std::vector<std::string> out;
  if (config.views_per_object < 1) out.emplace_back("views_per_object must be >= 1");
  if (config.samples_per_view < 1) out.emplace_back("samples_per_view must be >= 1");
  if (config.selection_embedding_dim < 1) out.emplace_back("selection_embedding_dim must be >= 1");
  if (!(config.detector_threshold >= 0.0 && config.detector_threshold <= 1.0)) {
    out.emplace_back("detector_threshold must lie in [0,1]");
  }
  if (config.license_allowlist.empty()) out.emplace_back("license_allowlist must not be empty");
  if (!(config.nucleus_p > 0.0 && config.nucleus_p <= 1.0)) out.emplace_back("nucleus_p must lie in (0,1]");
  if (!(config.camera_radius > 0.0)) out.emplace_back("camera_radius must be > 0");
  if (config.render_resolution <= 0) out.emplace_back("render_resolution must be > 0");
  return out;
}

auto validate_asset(const AssetRecord& record) -> std::vector<std::string>
{
  std::vector<std::string> out;
  if (record.uid.empty()) {
    out.emplace_back("uid empty");
  }
  static constexpr std::array<char, 3> axes{'x', 'y', 'z'};
  for (std::size_t i = 0; i < 3; ++i) {
    if (!(record.bbox_min[i] <= record.bbox_max[i])) {
      out.push_back(fmt::format("bbox_min.{} > bbox_max.{}", axes[i], axes[i]));
    }
  }
  if (!record.image_paths.empty() && !record.camera_poses.empty() &&
      record.image_paths.size() != record.camera_poses.size()) {
    out.emplace_back("images/cameras length mismatch");
  }
  for (std::size_t i = 0; i < record.camera_poses.size(); ++i) {
    const auto& pose = record.camera_poses[i];
    if (pose.resolution <= 0) {
      out.push_back(fmt::format("camera_poses[{}].resolution must be > 0", i));
    }
    if (!(pose.radius > 0.0)) {
      out.push_back(fmt::format("camera_poses[{}].radius must be > 0", i));
    }
  }
  return out;
}

auto validate_manifest(const std::vector<AssetRecord>& records) -> std::vector<std::string>
{
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& record : records) {
    for (const auto& v : validate_asset(record)) {
      out.push_back(fmt::format("{}: {}", record.uid, v));
    }
    if (!record.uid.empty() && !seen.insert(record.uid).second) {
      out.push_back(fmt::format("{}: uid duplicated", record.uid));
    }
  }
  return out;
}

}  // namespace capforge
