#include "capforge/run_config.hpp"

#include <cstdlib>
#include <algorithm>

#include <fmt/format.h>

#include "capforge/dataset_store.hpp"
#include "capforge/errors.hpp"
#include "capforge/record_codec.hpp"

namespace capforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::string_view section, std::initializer_list<std::string_view> allowed)
{
  if (!j.is_object()) {
    throw Error(Errc::config_error, fmt::format("section '{}' must be an object", section));
  }
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Error(Errc::config_error, fmt::format("unknown key '{}' in section '{}'", key, section));
    }
  }
}

auto resolve(const fs::path& base, const std::string& p) -> std::string
{
  if (p.empty()) {
    return p;
  }
  const fs::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

auto endpoint_defaults(std::string_view name) -> BackendEndpoint
{
  BackendEndpoint e;
  e.base_url = "mock://";
  if (name == "summarizer") {
    e.max_concurrency = 2;
    e.qps_limit = 5.0;
  }
  return e;
}

auto parse_endpoint(const json& j, std::string_view name) -> BackendEndpoint
{
  reject_unknown(j, fmt::format("backends.{}", name),
                 {"base_url", "timeout_ms", "max_retries", "qps_limit", "max_concurrency", "burst",
                  "initial_backoff_ms", "max_backoff_ms", "send_image_uri", "api_key_env"});
  auto e = endpoint_defaults(name);
  e.base_url = j.value("base_url", e.base_url);
  e.timeout = std::chrono::milliseconds(j.value("timeout_ms", static_cast<std::int64_t>(e.timeout.count())));
  e.max_retries = j.value("max_retries", e.max_retries);
  e.qps_limit = j.value("qps_limit", e.qps_limit);
  e.max_concurrency = j.value("max_concurrency", e.max_concurrency);
  e.burst = j.value("burst", e.burst);
  e.initial_backoff =
      std::chrono::milliseconds(j.value("initial_backoff_ms", static_cast<std::int64_t>(e.initial_backoff.count())));
  e.max_backoff = std::chrono::milliseconds(j.value("max_backoff_ms", static_cast<std::int64_t>(e.max_backoff.count())));
  e.send_image_uri = j.value("send_image_uri", e.send_image_uri);
  std::string env_name = fmt::format("CAPFORGE_{}_API_KEY", name == "captioner" ? "CAPTIONER"
                                                            : name == "embedder" ? "EMBEDDER"
                                                                                 : "SUMMARIZER");
  env_name = j.value("api_key_env", env_name);
  if (const char* key = std::getenv(env_name.c_str()); key != nullptr && *key != '\0') {
    e.api_key = key;
  }
  if (const auto problems = validate_endpoint(e); !problems.empty()) {
    throw Error(Errc::config_error, fmt::format("backends.{}: {}", name, problems.front()));
  }
  return e;
}

auto parse_rates(const json& j) -> CostRates
{
  reject_unknown(j, "rates",
                 {"gpu_price_per_hour", "captioner_iters_per_hour", "embedder_iters_per_hour",
                  "llm_price_per_1k_tokens", "human_cost_per_1k", "human_speed_per_day", "pipeline_speed_per_day",
                  "default_avg_prompt_tokens", "no_selection_avg_prompt_tokens"});
  CostRates r;
  r.gpu_price_per_hour = j.value("gpu_price_per_hour", r.gpu_price_per_hour);
  r.captioner_iters_per_hour = j.value("captioner_iters_per_hour", r.captioner_iters_per_hour);
  r.embedder_iters_per_hour = j.value("embedder_iters_per_hour", r.embedder_iters_per_hour);
  r.llm_price_per_1k_tokens = j.value("llm_price_per_1k_tokens", r.llm_price_per_1k_tokens);
  r.human_cost_per_1k = j.value("human_cost_per_1k", r.human_cost_per_1k);
  r.human_speed_per_day = j.value("human_speed_per_day", r.human_speed_per_day);
  r.pipeline_speed_per_day = j.value("pipeline_speed_per_day", r.pipeline_speed_per_day);
  r.default_avg_prompt_tokens = j.value("default_avg_prompt_tokens", r.default_avg_prompt_tokens);
  r.no_selection_avg_prompt_tokens = j.value("no_selection_avg_prompt_tokens", r.no_selection_avg_prompt_tokens);
  if (const auto problems = validate_rates(r); !problems.empty()) {
    throw Error(Errc::config_error, "rates: " + problems.front());
  }
  return r;
}

}  // namespace

auto default_run_config() -> RunConfig
{
  RunConfig c;
  c.captioner = endpoint_defaults("captioner");
  c.embedder = endpoint_defaults("embedder");
  c.summarizer = endpoint_defaults("summarizer");
  return c;
}

auto parse_run_config(const json& j, const fs::path& base_dir) -> RunConfig
{
  auto c = default_run_config();
  try {
    reject_unknown(j, "<root>", {"pipeline", "backends", "rates", "filter", "io", "workers"});
    if (j.contains("pipeline")) {
      c.pipeline = config_from_json(j.at("pipeline"));
    }
    if (j.contains("backends")) {
      const auto& b = j.at("backends");
      reject_unknown(b, "backends", {"captioner", "embedder", "summarizer"});
      if (b.contains("captioner")) c.captioner = parse_endpoint(b.at("captioner"), "captioner");
      if (b.contains("embedder")) c.embedder = parse_endpoint(b.at("embedder"), "embedder");
      if (b.contains("summarizer")) c.summarizer = parse_endpoint(b.at("summarizer"), "summarizer");
    }
    if (j.contains("rates")) {
      c.rates = parse_rates(j.at("rates"));
    }
    if (j.contains("filter")) {
      const auto& f = j.at("filter");
      reject_unknown(f, "filter", {"license_allowlist", "detector_threshold", "blocklist_path", "detector_scores_path"});
      if (f.contains("license_allowlist")) {
        c.pipeline.license_allowlist.clear();
        for (const auto& l : f.at("license_allowlist")) {
          c.pipeline.license_allowlist.insert(parse_license(l.get<std::string>()));
        }
      }
      c.pipeline.detector_threshold = f.value("detector_threshold", c.pipeline.detector_threshold);
      c.pipeline.blocklist_path = f.value("blocklist_path", c.pipeline.blocklist_path);
      c.detector_scores_path = f.value("detector_scores_path", c.detector_scores_path);
    }
    if (j.contains("io")) {
      const auto& io = j.at("io");
      reject_unknown(io, "io", {"manifest", "render_dir", "out_dir", "checkpoint_dir"});
      c.io.manifest = io.value("manifest", c.io.manifest);
      c.io.render_dir = io.value("render_dir", c.io.render_dir);
      c.io.out_dir = io.value("out_dir", c.io.out_dir);
      c.io.checkpoint_dir = io.value("checkpoint_dir", c.io.checkpoint_dir);
    }
    c.workers = j.value("workers", c.workers);
  } catch (const json::exception& e) {
    throw Error(Errc::config_error, e.what());
  }
  c.pipeline.blocklist_path = resolve(base_dir, c.pipeline.blocklist_path);
  c.detector_scores_path = resolve(base_dir, c.detector_scores_path);
  c.io.manifest = resolve(base_dir, c.io.manifest);
  c.io.render_dir = resolve(base_dir, c.io.render_dir);
  c.io.out_dir = resolve(base_dir, c.io.out_dir);
  c.io.checkpoint_dir = resolve(base_dir, c.io.checkpoint_dir);
  if (c.workers < 1) {
    throw Error(Errc::config_error, "workers must be >= 1");
  }
  if (const auto problems = validate_config(c.pipeline); !problems.empty()) {
    throw Error(Errc::config_error, problems.front());
  }
  return c;
}

auto load_run_config(const fs::path& path) -> RunConfig
{
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error&) {
    throw Error(Errc::config_error, "cannot read config " + path.string());
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::config_error, fmt::format("{}: {}", path.string(), e.what()));
  }
  return parse_run_config(j, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

void check_input_paths(const RunConfig& config, bool manifest_is_input)
{
  auto need = [](const std::string& p, std::string_view what) {
    if (!p.empty() && !fs::exists(p)) {
      throw Error(Errc::config_error, fmt::format("{} not found: {}", what, p));
    }
  };
  need(config.pipeline.blocklist_path, "blocklist");
  need(config.detector_scores_path, "detector scores");
  if (manifest_is_input) {
    need(config.io.manifest, "manifest");
  }
  need(config.io.render_dir, "render directory");
}

auto make_backends(const RunConfig& config) -> Backends
{
  const auto seed = config.pipeline.seed;
  const auto dim = config.pipeline.selection_embedding_dim;
  auto executor = [&](const BackendEndpoint& e) {
    return std::make_shared<RequestExecutor>(e, make_transport(e, seed, dim));
  };
  return {std::make_shared<CaptionerClient>(executor(config.captioner)),
          std::make_shared<EmbedderClient>(executor(config.embedder), dim),
          std::make_shared<SummarizerClient>(executor(config.summarizer))};
}

}  // namespace capforge
