#pragma once

#include <string>

#include <json.hpp>

#include "capforge/core_types.hpp"

namespace capforge {

/// A manifest line: the asset plus its consolidated caption once produced.
struct ManifestEntry {
  AssetRecord asset;
  std::optional<FinalCaption> final_caption;

  friend auto operator==(const ManifestEntry&, const ManifestEntry&) -> bool = default;
};

// JSON field names follow the released dataset schema: uid, images, cameras,
// captions, point_cloud, latent_code.
auto asset_to_json(const AssetRecord& record) -> nlohmann::ordered_json;
/// Throws Error(parse_error) on missing or mistyped fields.
auto asset_from_json(const nlohmann::json& j) -> AssetRecord;

auto final_caption_to_json(const FinalCaption& caption) -> nlohmann::ordered_json;
auto final_caption_from_json(const nlohmann::json& j, const std::string& uid) -> FinalCaption;

auto entry_to_json(const ManifestEntry& entry) -> nlohmann::ordered_json;
auto entry_from_json(const nlohmann::json& j) -> ManifestEntry;

auto config_to_json(const PipelineConfig& config) -> nlohmann::ordered_json;
/// Unknown keys are rejected with Error(config_error); missing keys keep
/// their defaults.
auto config_from_json(const nlohmann::json& j) -> PipelineConfig;

/// Content digest of the per-asset pipeline settings. The blocklist path is
/// left out: screening runs after checkpointed work.
auto config_hash(const PipelineConfig& config) -> std::string;

}  // namespace capforge
