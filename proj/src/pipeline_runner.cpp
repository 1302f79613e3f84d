#include "capforge/pipeline_runner.hpp"

#include <algorithm>
#include <atomic>
#include <future>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "capforge/checkpoint.hpp"
#include "capforge/errors.hpp"
#include "capforge/render_geometry.hpp"

namespace capforge {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct StageFailure {
  std::string stage;
  std::string reason;
  std::string detail;
};

template <typename F>
auto in_stage(const char* stage, F&& f) -> decltype(f())
{
  try {
    return f();
  } catch (const SummarizerRefused& e) {
    throw StageFailure{stage, "needs-review", e.raw_payload()};
  } catch (const Error& e) {
    throw StageFailure{stage, std::string(errc_name(e.code())), e.detail()};
  } catch (const std::exception& e) {
    throw StageFailure{stage, "internal-error", e.what()};
  }
}

struct ViewResult {
  ViewCaption chosen;
  bool qa_fallback = false;
};

}  // namespace

auto outcome_to_json(const AssetOutcome& o) -> ordered_json
{
  ordered_json j;
  j["uid"] = o.uid;
  if (o.entry) {
    j["entry"] = entry_to_json(*o.entry);
  }
  if (o.quarantine) {
    j["quarantine"] = {{"stage", o.quarantine->stage},
                       {"reason", o.quarantine->reason},
                       {"detail", o.quarantine->detail}};
  }
  j["usage"] = {{"prompt_tokens", o.usage.prompt_tokens}, {"completion_tokens", o.usage.completion_tokens}};
  j["flags"] = o.flags;
  return j;
}

auto outcome_from_json(const json& j) -> AssetOutcome
{
  try {
    AssetOutcome o;
    o.uid = j.at("uid").get<std::string>();
    if (j.contains("entry")) {
      o.entry = entry_from_json(j.at("entry"));
    }
    if (j.contains("quarantine")) {
      const auto& q = j.at("quarantine");
      o.quarantine = QuarantineRecord{o.uid, q.at("stage").get<std::string>(), q.at("reason").get<std::string>(),
                                      q.value("detail", std::string{})};
    }
    o.usage.prompt_tokens = j.at("usage").at("prompt_tokens").get<std::int64_t>();
    o.usage.completion_tokens = j.at("usage").at("completion_tokens").get<std::int64_t>();
    o.flags = j.value("flags", std::vector<std::string>{});
    return o;
  } catch (const json::exception& e) {
    throw Error(Errc::parse_error, std::string("journal record: ") + e.what());
  }
}

auto resolve_images(const AssetRecord& asset, const PipelineConfig& config, const fs::path& image_root)
    -> std::vector<ImageRef>
{
  std::vector<ImageRef> refs;
  if (!asset.image_paths.empty()) {
    for (const auto& p : asset.image_paths) {
      const fs::path path(p);
      refs.push_back({path.is_absolute() || image_root.empty() ? path.string() : (image_root / path).string()});
    }
    return refs;
  }
  for (int v = 0; v < config.views_per_object; ++v) {
    refs.push_back({render_image_path(image_root.string(), asset.uid, v)});
  }
  return refs;
}

auto assemble_entry(const AssetRecord& asset, const std::vector<ViewCaption>& selected, FinalCaption caption,
                    const PipelineConfig& config) -> ManifestEntry
{
  ManifestEntry entry;
  entry.asset = asset;
  if (entry.asset.image_paths.empty()) {
    for (int v = 0; v < config.views_per_object; ++v) {
      entry.asset.image_paths.push_back(fmt::format("{}/{}.png", asset.uid, v));
    }
  }
  if (entry.asset.camera_poses.empty() && config.views_per_object >= 2) {
    entry.asset.camera_poses = generate_camera_rig(config);
  }
  entry.asset.captions.clear();
  for (const auto& s : selected) {
    entry.asset.captions.push_back(s.text);
  }
  entry.final_caption = std::move(caption);
  return entry;
}

auto process_asset(const AssetRecord& asset, const PipelineConfig& config, const Backends& backends,
                   const fs::path& image_root) -> AssetOutcome
{
  AssetOutcome outcome;
  outcome.uid = asset.uid;
  try {
    const auto images = resolve_images(asset, config, image_root);
    if (static_cast<int>(images.size()) != config.views_per_object) {
      throw StageFailure{"caption", "missing-renders",
                         fmt::format("{} images for {} views", images.size(), config.views_per_object)};
    }

    std::vector<std::future<ViewResult>> pending;
    pending.reserve(images.size());
    for (std::size_t v = 0; v < images.size(); ++v) {
      pending.push_back(std::async(std::launch::async, [&, v] {
        const int view = static_cast<int>(v);
        auto candidates = in_stage("caption", [&] {
          return config.qa_mode ? qa_caption_view(images[v], view, *backends.captioner, config)
                                : caption_view(images[v], view, *backends.captioner, config);
        });
        auto selection = in_stage("select", [&] { return select_view(candidates, images[v], *backends.embedder); });
        return ViewResult{std::move(selection.chosen), candidates.qa_fallback};
      }));
    }
    // Wait for every view before surfacing the first failure, in view order.
    std::vector<ViewResult> views;
    std::optional<StageFailure> failure;
    for (auto& f : pending) {
      try {
        views.push_back(f.get());
      } catch (const StageFailure& e) {
        if (!failure) {
          failure = e;
        }
      }
    }
    if (failure) {
      throw *failure;
    }

    std::vector<ViewCaption> selected;
    for (const auto& v : views) {
      selected.push_back(v.chosen);
      if (v.qa_fallback) {
        outcome.flags.push_back(fmt::format("qa-fallback:view-{}", v.chosen.view_index));
      }
    }
    const auto mode = config.qa_mode ? CaptionMode::QA : CaptionMode::STANDARD;
    auto consolidated =
        in_stage("consolidate", [&] { return consolidate(asset.uid, selected, *backends.summarizer, config, mode); });
    outcome.usage = consolidated.usage;

    outcome.entry = assemble_entry(asset, selected, std::move(consolidated.caption), config);
  } catch (const StageFailure& e) {
    outcome.entry.reset();
    outcome.quarantine = QuarantineRecord{asset.uid, e.stage, e.reason, e.detail};
  }
  return outcome;
}

auto run_pipeline(const std::vector<AssetRecord>& manifest, const PipelineConfig& config, const Backends& backends,
                  const PipelineOptions& options) -> PipelineResult
{
  if (const auto problems = validate_config(config); !problems.empty()) {
    throw Error(Errc::config_error, problems.front());
  }
  if (const auto problems = validate_manifest(manifest); !problems.empty()) {
    throw Error(Errc::parse_error, "invalid manifest: " + problems.front());
  }
  if (!backends.captioner || !backends.embedder || !backends.summarizer) {
    throw Error(Errc::config_error, "all three backends are required");
  }

  PipelineResult result;
  result.config_hash = config_hash(config);

  auto admission = admit_assets(manifest, options.detector_scores, config);
  result.report = std::move(admission.report);
  result.warnings = std::move(admission.warnings);
  auto admitted = std::move(admission.admitted);
  std::sort(admitted.begin(), admitted.end(),
            [](const AssetRecord& a, const AssetRecord& b) { return a.uid < b.uid; });

  std::optional<CheckpointStore> store;
  std::map<std::string, AssetOutcome> outcomes;
  if (options.checkpoint_dir) {
    store.emplace(*options.checkpoint_dir, result.config_hash, PipelineStage::FILTERED);
    for (const auto& [uid, record] : store->recovered()) {
      outcomes.emplace(uid, outcome_from_json(record));
    }
  }

  std::vector<const AssetRecord*> todo;
  for (const auto& a : admitted) {
    if (!outcomes.contains(a.uid)) {
      todo.push_back(&a);
    }
  }
  std::size_t limit = todo.size();
  if (options.stop_after && *options.stop_after < limit) {
    limit = *options.stop_after;
    result.interrupted = true;
  }

  std::atomic<std::size_t> next{0};
  std::mutex writer;
  std::size_t since_commit = 0;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= limit) {
        return;
      }
      auto outcome = process_asset(*todo[i], config, backends, options.image_root);
      std::lock_guard lock(writer);
      if (store) {
        store->record(outcome.uid, outcome_to_json(outcome));
        if (++since_commit >= std::max<std::size_t>(options.commit_every, 1)) {
          store->commit();
          since_commit = 0;
        }
      }
      outcomes.emplace(outcome.uid, std::move(outcome));
    }
  };
  {
    const int n = std::clamp<int>(options.workers, 1, static_cast<int>(std::max<std::size_t>(limit, 1)));
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) {
      pool.emplace_back(worker);
    }
  }
  if (store) {
    store->commit();
  }
  if (result.interrupted) {
    return result;
  }

  std::vector<AssetRecord> captioned;
  std::map<std::string, std::string> captions;
  std::map<std::string, ManifestEntry> entries;
  for (const auto& a : admitted) {
    auto& o = outcomes.at(a.uid);
    result.usage += o.usage;
    for (const auto& flag : o.flags) {
      result.warnings.push_back(fmt::format("{}: {}", o.uid, flag));
    }
    if (o.quarantine) {
      result.quarantined.push_back(*o.quarantine);
      continue;
    }
    ++result.summarized;
    captioned.push_back(o.entry->asset);
    captions[o.uid] = o.entry->final_caption->text;
    entries[o.uid] = std::move(*o.entry);
  }
  result.report.add_stage(std::string(stage::captioning), 0, static_cast<std::int64_t>(result.quarantined.size()));
  for (const auto& q : result.quarantined) {
    result.report.rejections.push_back({q.uid, std::string(stage::captioning), q.reason});
  }
  const auto kept = screen_captions(captioned, captions, options.blocklist, result.report, result.warnings);
  for (const auto& a : kept) {
    result.entries.push_back(std::move(entries.at(a.uid)));
  }

  CostOptions cost_options;
  if (result.summarized > 0) {
    cost_options.measured_avg_prompt_tokens =
        static_cast<double>(result.usage.prompt_tokens) / static_cast<double>(result.summarized);
  }
  result.cost = pipeline_cost(config, options.rates, cost_options);
  return result;
}

}  // namespace capforge
