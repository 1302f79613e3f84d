#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "capforge/backend_client.hpp"
#include "capforge/core_types.hpp"
#include "capforge/cost_model.hpp"

namespace capforge {

struct IoPaths {
  std::string manifest;
  std::string render_dir;
  std::string out_dir;
  std::string checkpoint_dir;
};

/// The single run configuration file:
///   { "pipeline": {...}, "backends": {"captioner": {...}, "embedder": {...},
///     "summarizer": {...}}, "rates": {...}, "filter": {...}, "io": {...} }
/// Every section is optional; unknown keys anywhere are rejected. Relative
/// paths resolve against the directory holding the file.
struct RunConfig {
  PipelineConfig pipeline;
  BackendEndpoint captioner;
  BackendEndpoint embedder;
  BackendEndpoint summarizer;
  CostRates rates;
  std::string detector_scores_path;
  IoPaths io;
  int workers = 4;
};

auto default_run_config() -> RunConfig;

/// Throws Error(config_error).
auto parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir) -> RunConfig;
auto load_run_config(const std::filesystem::path& path) -> RunConfig;

/// Verifies that configured input files exist. The manifest is skipped when
/// the caller is about to produce it. Throws Error(config_error).
void check_input_paths(const RunConfig& config, bool manifest_is_input = true);

/// Clients for the three configured endpoints. API keys come from
/// CAPFORGE_<BACKEND>_API_KEY unless the endpoint names another variable.
auto make_backends(const RunConfig& config) -> Backends;

}  // namespace capforge
