#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "capforge/backend_client.hpp"
#include "capforge/caption_pipeline.hpp"
#include "capforge/cost_model.hpp"
#include "capforge/ethics_filter.hpp"
#include "capforge/record_codec.hpp"

namespace capforge {

/// Per-asset failure isolation record.
struct QuarantineRecord {
  std::string uid;
  std::string stage;
  std::string reason;
  std::string detail;

  friend auto operator==(const QuarantineRecord&, const QuarantineRecord&) -> bool = default;
};

/// Result of pushing one asset through caption -> select -> consolidate.
struct AssetOutcome {
  std::string uid;
  std::optional<ManifestEntry> entry;
  std::optional<QuarantineRecord> quarantine;
  TokenUsage usage;
  std::vector<std::string> flags;
};

auto outcome_to_json(const AssetOutcome& outcome) -> nlohmann::ordered_json;
auto outcome_from_json(const nlohmann::json& j) -> AssetOutcome;

struct PipelineOptions {
  int workers = 4;
  /// Resume from / record progress into this directory.
  std::optional<std::filesystem::path> checkpoint_dir;
  /// Process at most this many not-yet-completed assets, then stop with
  /// `interrupted` set. Used to bound a run and to exercise resume.
  std::optional<std::size_t> stop_after;
  /// Completed assets between checkpoint commits.
  std::size_t commit_every = 8;
  /// Root for relative image paths and for the default
  /// <uid>/<view_index>.png layout.
  std::filesystem::path image_root;
  std::map<std::string, DetectorScores> detector_scores;
  Blocklist blocklist;
  CostRates rates;
};

struct PipelineResult {
  /// Kept assets with final captions, sorted by uid.
  std::vector<ManifestEntry> entries;
  FilterReport report;
  CostBreakdown cost;
  std::vector<QuarantineRecord> quarantined;
  std::vector<std::string> warnings;
  TokenUsage usage;
  std::int64_t summarized = 0;
  bool interrupted = false;
  std::string config_hash;
};

/// Images for an asset: its own image_paths when present, otherwise the
/// rendered-view layout under `image_root`. Relative paths resolve against
/// `image_root`.
auto resolve_images(const AssetRecord& asset, const PipelineConfig& config, const std::filesystem::path& image_root)
    -> std::vector<ImageRef>;

/// The manifest entry for a captioned asset: selected view captions, the
/// final caption, and default image paths and camera poses when the asset
/// has none.
auto assemble_entry(const AssetRecord& asset, const std::vector<ViewCaption>& selected, FinalCaption caption,
                    const PipelineConfig& config) -> ManifestEntry;

/// Captions, selects and consolidates one asset. Backend failures are
/// captured as a quarantine record rather than thrown; views run
/// concurrently.
auto process_asset(const AssetRecord& asset, const PipelineConfig& config, const Backends& backends,
                   const std::filesystem::path& image_root) -> AssetOutcome;

/// The whole batch: admission filters, a bounded worker pool over admitted
/// assets, caption screening and cost accounting. Output is ordered by uid
/// regardless of scheduling, and a resumed run reproduces an uninterrupted
/// one exactly. Throws only for manifest or configuration errors.
auto run_pipeline(const std::vector<AssetRecord>& manifest, const PipelineConfig& config, const Backends& backends,
                  const PipelineOptions& options) -> PipelineResult;

}  // namespace capforge
