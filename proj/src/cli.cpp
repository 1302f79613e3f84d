#include "capforge/cli.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "capforge/caption_pipeline.hpp"
#include "capforge/cost_model.hpp"
#include "capforge/crowd_clean.hpp"
#include "capforge/csv.hpp"
#include "capforge/dataset_store.hpp"
#include "capforge/errors.hpp"
#include "capforge/ethics_filter.hpp"
#include "capforge/eval_metrics.hpp"
#include "capforge/hashing.hpp"
#include "capforge/mock_backend.hpp"
#include "capforge/pipeline_runner.hpp"
#include "capforge/record_codec.hpp"
#include "capforge/render_geometry.hpp"
#include "capforge/run_config.hpp"

namespace capforge {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct Globals {
  std::string config_path;
  bool dry_run = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
};

struct Console {
  std::ostream& out;
  std::ostream& err;
};

auto load_config(const Globals& g, bool manifest_is_input) -> RunConfig
{
  auto config = g.config_path.empty() ? default_run_config() : load_run_config(g.config_path);
  if (g.seed) {
    config.pipeline.seed = *g.seed;
  }
  if (g.workers) {
    if (*g.workers < 1) {
      throw Error(Errc::config_error, "--workers must be >= 1");
    }
    config.workers = *g.workers;
  }
  check_input_paths(config, manifest_is_input);
  return config;
}

auto pick(const std::string& flag, const std::string& configured, std::string_view what) -> std::string
{
  const auto& path = flag.empty() ? configured : flag;
  if (path.empty()) {
    throw Error(Errc::config_error, fmt::format("no {} given", what));
  }
  return path;
}

auto read_jsonl(const fs::path& path) -> std::vector<json>
{
  std::istringstream in(read_file(path));
  std::vector<json> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(Errc::parse_error, fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
  return rows;
}

auto to_jsonl(const std::vector<ordered_json>& rows) -> std::string
{
  std::string text;
  for (const auto& r : rows) {
    text += r.dump();
    text += '\n';
  }
  return text;
}

void write_output(const fs::path& path, std::string_view contents)
{
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  atomic_write_file(path, contents);
}

/// Runs f(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& f)
{
  std::atomic<std::size_t> next{0};
  const auto threads = static_cast<std::size_t>(std::clamp<int>(workers, 1, static_cast<int>(std::max<std::size_t>(n, 1))));
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        f(i);
      }
    });
  }
}

auto quarantine_json(const std::string& uid, std::string_view stage, const std::exception& e) -> ordered_json
{
  std::string reason = "internal-error";
  std::string detail = e.what();
  if (const auto* refused = dynamic_cast<const SummarizerRefused*>(&e)) {
    reason = "needs-review";
    detail = refused->raw_payload();
  } else if (const auto* err = dynamic_cast<const Error*>(&e)) {
    reason = std::string(errc_name(err->code()));
    detail = err->detail();
  }
  ordered_json j;
  j["uid"] = uid;
  j["quarantine"] = {{"stage", stage}, {"reason", reason}, {"detail", detail}};
  return j;
}

void report_quarantine(Console& io, const json& row)
{
  const auto& q = row.at("quarantine");
  io.err << fmt::format("quarantined {}: {} at {}: {}\n", row.at("uid").get<std::string>(),
                        q.at("reason").get<std::string>(), q.at("stage").get<std::string>(),
                        q.value("detail", std::string{}));
}

auto usage_json(const TokenUsage& u) -> ordered_json
{
  return {{"prompt_tokens", u.prompt_tokens}, {"completion_tokens", u.completion_tokens}};
}

auto manifest_assets(const fs::path& path) -> std::vector<AssetRecord>
{
  std::vector<AssetRecord> assets;
  for (auto& e : read_manifest(path).entries) {
    assets.push_back(std::move(e.asset));
  }
  return assets;
}

auto mode_of(const PipelineConfig& config) -> CaptionMode
{
  return config.qa_mode ? CaptionMode::QA : CaptionMode::STANDARD;
}

// ---- ingest ---------------------------------------------------------------

struct IngestArgs {
  std::string input;
  std::string output;
};

auto cmd_ingest(const Globals& g, const IngestArgs& a, Console& io) -> int
{
  const auto config = load_config(g, false);
  const auto output = pick(a.output, config.io.manifest, "output manifest");
  auto raw = read_asset_lines(a.input);
  if (g.dry_run) {
    io.out << fmt::format("ingest: {} records from {} -> {}\n", raw.size(), a.input, output);
    return kExitOk;
  }
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  int skipped = 0;
  for (auto& r : raw) {
    auto problems = validate_asset(r);
    if (problems.empty() && !seen.insert(r.uid).second) {
      problems.push_back("duplicate uid");
    }
    if (!problems.empty()) {
      ++skipped;
      io.err << fmt::format("skipped {}: {}\n", r.uid, problems.front());
      continue;
    }
    entries.push_back({std::move(r), std::nullopt});
  }
  write_manifest(output, {kManifestVersion, config_hash(config.pipeline)}, std::move(entries));
  io.out << fmt::format("ingested {} of {} records into {}\n", raw.size() - static_cast<std::size_t>(skipped),
                        raw.size(), output);
  return skipped > 0 ? kExitQuarantine : kExitOk;
}

// ---- render-plan ----------------------------------------------------------

struct RenderPlanArgs {
  std::string manifest;
  std::string output;
};

auto cmd_render_plan(const Globals& g, const RenderPlanArgs& a, Console& io) -> int
{
  const auto config = load_config(g, a.manifest.empty());
  const auto manifest = pick(a.manifest, config.io.manifest, "manifest");
  const auto output = pick(a.output, config.io.out_dir.empty() ? "" : (fs::path(config.io.out_dir) / "render_plans.jsonl").string(),
                           "output path");
  const auto assets = manifest_assets(manifest);
  if (g.dry_run) {
    io.out << fmt::format("render-plan: {} assets x {} views -> {}\n", assets.size(),
                          config.pipeline.views_per_object, output);
    return kExitOk;
  }
  const auto batch = emit_render_plan(assets, config.pipeline);
  write_output(output, serialize_render_plans(batch.plans));
  for (const auto& s : batch.skipped) {
    io.err << fmt::format("skipped {}: {}\n", s.uid, s.reason);
  }
  io.out << fmt::format("{} render plans written to {}, {} skipped\n", batch.plans.size(), output,
                        batch.skipped.size());
  return batch.skipped.empty() ? kExitOk : kExitQuarantine;
}

// ---- caption / select / consolidate ----------------------------------------

struct StageArgs {
  std::string input;
  std::string output;
  std::string images;
};

auto cmd_caption(const Globals& g, const StageArgs& a, Console& io) -> int
{
  const auto config = load_config(g, a.input.empty());
  const auto manifest = pick(a.input, config.io.manifest, "manifest");
  const auto output = pick(a.output, config.io.out_dir.empty() ? "" : (fs::path(config.io.out_dir) / "candidates.jsonl").string(),
                           "output path");
  const fs::path image_root = a.images.empty() ? config.io.render_dir : a.images;
  const auto assets = manifest_assets(manifest);
  if (g.dry_run) {
    io.out << fmt::format("caption: {} assets x {} views x {} samples ({} mode) via {} -> {}\n", assets.size(),
                          config.pipeline.views_per_object, config.pipeline.samples_per_view,
                          render_caption_mode(mode_of(config.pipeline)), config.captioner.base_url, output);
    return kExitOk;
  }
  const auto backends = make_backends(config);
  std::vector<ordered_json> rows(assets.size());
  parallel_for(assets.size(), config.workers, [&](std::size_t i) {
    const auto& asset = assets[i];
    try {
      const auto images = resolve_images(asset, config.pipeline, image_root);
      if (static_cast<int>(images.size()) != config.pipeline.views_per_object) {
        throw Error(Errc::invalid_argument,
                    fmt::format("{} images for {} views", images.size(), config.pipeline.views_per_object));
      }
      const auto views = config.pipeline.qa_mode ? qa_caption(images, *backends.captioner, config.pipeline)
                                                 : caption_views(images, *backends.captioner, config.pipeline);
      ordered_json row;
      row["uid"] = asset.uid;
      row["mode"] = std::string(render_caption_mode(mode_of(config.pipeline)));
      row["views"] = ordered_json::array();
      for (const auto& v : views) {
        ordered_json view;
        view["view_index"] = v.view_index;
        view["image"] = images[static_cast<std::size_t>(v.view_index)].path;
        view["candidates"] = ordered_json::array();
        for (const auto& c : v.candidates) {
          view["candidates"].push_back(c.text);
        }
        if (config.pipeline.qa_mode) {
          view["qa_object"] = v.qa_object;
          view["qa_fallback"] = v.qa_fallback;
        }
        row["views"].push_back(std::move(view));
      }
      rows[i] = std::move(row);
    } catch (const std::exception& e) {
      rows[i] = quarantine_json(asset.uid, "caption", e);
    }
  });
  int quarantined = 0;
  for (const auto& r : rows) {
    if (r.contains("quarantine")) {
      ++quarantined;
      report_quarantine(io, r);
    }
  }
  write_output(output, to_jsonl(rows));
  io.out << fmt::format("captioned {} assets into {}, {} quarantined\n", rows.size() - static_cast<std::size_t>(quarantined),
                        output, quarantined);
  return quarantined > 0 ? kExitQuarantine : kExitOk;
}

auto cmd_select(const Globals& g, const StageArgs& a, Console& io) -> int
{
  const auto config = load_config(g, false);
  const auto output = pick(a.output, config.io.out_dir.empty() ? "" : (fs::path(config.io.out_dir) / "selections.jsonl").string(),
                           "output path");
  const auto input = read_jsonl(pick(a.input, "", "candidates file"));
  if (g.dry_run) {
    io.out << fmt::format("select: {} assets from {} via {} -> {}\n", input.size(), a.input, config.embedder.base_url,
                          output);
    return kExitOk;
  }
  const auto backends = make_backends(config);
  std::vector<ordered_json> rows(input.size());
  parallel_for(input.size(), config.workers, [&](std::size_t i) {
    const auto& in = input[i];
    const auto uid = in.value("uid", std::string{});
    if (in.contains("quarantine")) {
      rows[i] = in;
      return;
    }
    try {
      ordered_json row;
      row["uid"] = uid;
      row["mode"] = in.at("mode");
      row["selected"] = ordered_json::array();
      row["flags"] = ordered_json::array();
      for (const auto& v : in.at("views")) {
        ViewCandidates view;
        view.view_index = v.at("view_index").get<int>();
        int sample = 0;
        for (const auto& t : v.at("candidates")) {
          view.candidates.push_back({t.get<std::string>(), view.view_index, sample++});
        }
        const auto selection = select_view(view, {v.at("image").get<std::string>()}, *backends.embedder);
        row["selected"].push_back({{"view_index", selection.chosen.view_index},
                                   {"text", selection.chosen.text},
                                   {"cosine_score", selection.chosen.cosine_score}});
        if (v.value("qa_fallback", false)) {
          row["flags"].push_back(fmt::format("qa-fallback:view-{}", view.view_index));
        }
      }
      rows[i] = std::move(row);
    } catch (const json::exception& e) {
      rows[i] = quarantine_json(uid, "select", Error(Errc::parse_error, e.what()));
    } catch (const std::exception& e) {
      rows[i] = quarantine_json(uid, "select", e);
    }
  });
  int quarantined = 0;
  for (const auto& r : rows) {
    if (r.contains("quarantine")) {
      ++quarantined;
      report_quarantine(io, r);
    }
  }
  write_output(output, to_jsonl(rows));
  io.out << fmt::format("selected captions for {} assets into {}, {} quarantined\n",
                        rows.size() - static_cast<std::size_t>(quarantined), output, quarantined);
  return quarantined > 0 ? kExitQuarantine : kExitOk;
}

auto cmd_consolidate(const Globals& g, const StageArgs& a, Console& io) -> int
{
  const auto config = load_config(g, false);
  const auto output = pick(a.output, config.io.out_dir.empty() ? "" : (fs::path(config.io.out_dir) / "captions.jsonl").string(),
                           "output path");
  const auto input = read_jsonl(pick(a.input, "", "selections file"));
  if (g.dry_run) {
    io.out << fmt::format("consolidate: {} assets from {} via {} -> {}\n", input.size(), a.input,
                          config.summarizer.base_url, output);
    return kExitOk;
  }
  const auto backends = make_backends(config);
  std::vector<ordered_json> rows(input.size());
  parallel_for(input.size(), config.workers, [&](std::size_t i) {
    const auto& in = input[i];
    const auto uid = in.value("uid", std::string{});
    if (in.contains("quarantine")) {
      rows[i] = in;
      return;
    }
    try {
      std::vector<ViewCaption> selected;
      for (const auto& s : in.at("selected")) {
        selected.push_back(
            {s.at("text").get<std::string>(), s.at("view_index").get<int>(), s.at("cosine_score").get<double>()});
      }
      const auto mode = parse_caption_mode(in.at("mode").get<std::string>());
      if (!mode) {
        throw Error(Errc::parse_error, "unknown caption mode");
      }
      const auto result = consolidate(uid, selected, *backends.summarizer, config.pipeline, *mode);
      ordered_json row;
      row["uid"] = uid;
      row["final_caption"] = final_caption_to_json(result.caption);
      row["usage"] = usage_json(result.usage);
      row["flags"] = in.value("flags", json::array());
      rows[i] = std::move(row);
    } catch (const json::exception& e) {
      rows[i] = quarantine_json(uid, "consolidate", Error(Errc::parse_error, e.what()));
    } catch (const std::exception& e) {
      rows[i] = quarantine_json(uid, "consolidate", e);
    }
  });
  int quarantined = 0;
  TokenUsage usage;
  for (const auto& r : rows) {
    if (r.contains("quarantine")) {
      ++quarantined;
      report_quarantine(io, r);
    } else {
      usage.prompt_tokens += r.at("usage").at("prompt_tokens").get<std::int64_t>();
      usage.completion_tokens += r.at("usage").at("completion_tokens").get<std::int64_t>();
    }
  }
  write_output(output, to_jsonl(rows));
  io.out << fmt::format("consolidated {} assets into {} ({} prompt tokens), {} quarantined\n",
                        rows.size() - static_cast<std::size_t>(quarantined), output, usage.prompt_tokens, quarantined);
  return quarantined > 0 ? kExitQuarantine : kExitOk;
}

// ---- filter ---------------------------------------------------------------

struct FilterArgs {
  std::string manifest;
  std::string captions;
  std::string output;
  std::string report;
};

auto cmd_filter(const Globals& g, const FilterArgs& a, Console& io) -> int
{
  const auto config = load_config(g, a.manifest.empty());
  const auto manifest = pick(a.manifest, config.io.manifest, "manifest");
  const fs::path out_dir = config.io.out_dir;
  const auto output = pick(a.output, out_dir.empty() ? "" : (out_dir / "manifest.jsonl").string(), "output manifest");
  const auto report_path =
      pick(a.report, out_dir.empty() ? fs::path(output).replace_filename("filter_report.jsonl").string()
                                     : (out_dir / "filter_report.jsonl").string(),
           "report path");
  const auto assets = manifest_assets(manifest);
  std::vector<json> caption_rows;
  if (!a.captions.empty()) {
    caption_rows = read_jsonl(a.captions);
  }
  if (g.dry_run) {
    io.out << fmt::format("filter: {} assets, {} caption records, allowlist of {} licenses, threshold {} -> {}\n",
                          assets.size(), caption_rows.size(), config.pipeline.license_allowlist.size(),
                          config.pipeline.detector_threshold, output);
    return kExitOk;
  }
  const auto blocklist =
      config.pipeline.blocklist_path.empty() ? Blocklist{} : Blocklist::load(config.pipeline.blocklist_path);
  const auto scores = config.detector_scores_path.empty() ? std::map<std::string, DetectorScores>{}
                                                          : load_detector_scores(config.detector_scores_path);

  std::map<std::string, FinalCaption> finals;
  std::map<std::string, std::string> caption_text;
  int quarantined = 0;
  for (const auto& r : caption_rows) {
    const auto uid = r.at("uid").get<std::string>();
    if (r.contains("quarantine")) {
      ++quarantined;
      report_quarantine(io, r);
      continue;
    }
    auto fc = final_caption_from_json(r.at("final_caption"), uid);
    caption_text[uid] = fc.text;
    finals.emplace(uid, std::move(fc));
  }
  std::vector<AssetRecord> candidates;
  for (const auto& asset : assets) {
    if (caption_rows.empty() || finals.contains(asset.uid)) {
      candidates.push_back(asset);
    }
  }
  auto chain = apply_filter_chain(candidates, caption_text, scores, config.pipeline, blocklist);
  std::vector<ManifestEntry> entries;
  for (const auto& asset : chain.kept) {
    if (const auto it = finals.find(asset.uid); it != finals.end()) {
      entries.push_back(assemble_entry(asset, it->second.source_view_captions, it->second, config.pipeline));
    } else {
      entries.push_back({asset, std::nullopt});
    }
  }
  write_manifest(output, {kManifestVersion, config_hash(config.pipeline)}, std::move(entries));
  write_output(report_path, chain.report.to_json_lines());
  io.out << chain.report.render_table();
  for (const auto& w : chain.warnings) {
    io.err << "warning: " << w << '\n';
  }
  io.out << fmt::format("{} assets kept in {}\n", chain.kept.size(), output);
  return quarantined > 0 ? kExitQuarantine : kExitOk;
}

// ---- evaluate -------------------------------------------------------------

struct EvaluateArgs {
  std::string scores;
  std::string ks = "1,5,10";
  std::string method = "candidate";
  std::string clip_images;
  std::string clip_texts;
  std::string fid_reference;
  std::string fid_generated;
};

auto parse_ks(const std::string& text) -> std::vector<int>
{
  std::vector<int> ks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int k = std::stoi(item, &used);
      if (used != item.size()) {
        throw std::invalid_argument(item);
      }
      ks.push_back(k);
    } catch (const std::exception&) {
      throw Error(Errc::config_error, fmt::format("bad k value '{}'", item));
    }
  }
  if (ks.empty()) {
    throw Error(Errc::config_error, "no k values");
  }
  return ks;
}

auto cmd_evaluate(const Globals& g, const EvaluateArgs& a, Console& io) -> int
{
  load_config(g, false);
  const auto ks = parse_ks(a.ks);
  const bool retrieval = !a.scores.empty();
  const bool clip = !a.clip_images.empty() || !a.clip_texts.empty();
  const bool frechet = !a.fid_reference.empty() || !a.fid_generated.empty();
  if (!retrieval && !clip && !frechet) {
    throw Error(Errc::config_error, "nothing to evaluate: give --scores, --clip-images/--clip-texts or --fid-*");
  }
  if (clip && (a.clip_images.empty() || a.clip_texts.empty())) {
    throw Error(Errc::config_error, "--clip-images and --clip-texts go together");
  }
  if (frechet && (a.fid_reference.empty() || a.fid_generated.empty())) {
    throw Error(Errc::config_error, "--fid-reference and --fid-generated go together");
  }
  if (g.dry_run) {
    io.out << fmt::format("evaluate: retrieval={} clip={} fid={} ks={}\n", retrieval, clip, frechet, a.ks);
    return kExitOk;
  }
  MetricsRow row;
  row.method = a.method;
  if (clip) {
    const auto images = read_feature_matrix(a.clip_images);
    const auto texts = read_feature_matrix(a.clip_texts);
    if (images.rows() != texts.rows() || images.cols() != texts.cols() || images.rows() == 0) {
      throw Error(Errc::dim_mismatch, "CLIP embedding files must have matching non-empty shapes");
    }
    double sum = 0.0;
    for (Eigen::Index r = 0; r < images.rows(); ++r) {
      EmbeddingVector iv{std::vector<double>(images.row(r).begin(), images.row(r).end())};
      EmbeddingVector tv{std::vector<double>(texts.row(r).begin(), texts.row(r).end())};
      sum += clip_score(iv, tv);
    }
    row.clip_score = sum / static_cast<double>(images.rows());
  }
  if (retrieval) {
    const auto scores = read_score_matrix(a.scores);
    for (const double p : retrieval_precision(scores, RetrievalDirection::image_to_text, ks)) {
      row.image_to_text.push_back(100.0 * p);
    }
    for (const double p : retrieval_precision(scores, RetrievalDirection::text_to_image, ks)) {
      row.text_to_image.push_back(100.0 * p);
    }
  }
  if (clip || retrieval) {
    io.out << render_metrics_table(retrieval ? ks : std::vector<int>{}, {row});
  }
  if (frechet) {
    const auto reference = gaussian_stats(read_feature_matrix(a.fid_reference));
    const auto generated = gaussian_stats(read_feature_matrix(a.fid_generated));
    io.out << fmt::format("FID: {:.4f}\n", fid(reference, generated));
  }
  return kExitOk;
}

// ---- crowd ----------------------------------------------------------------

struct CrowdArgs {
  std::string captions;
  std::string banned;
  std::string output;
  std::string ab;
  std::string candidate;
  std::int64_t min_responses = 30;
};

auto read_banned(const std::string& path) -> std::set<std::string>
{
  std::set<std::string> banned;
  if (path.empty()) {
    return banned;
  }
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') {
      continue;
    }
    banned.insert(line.substr(b, line.find_last_not_of(" \t\r") - b + 1));
  }
  return banned;
}

auto cmd_crowd(const Globals& g, const CrowdArgs& a, Console& io) -> int
{
  load_config(g, false);
  if (a.captions.empty() && a.ab.empty()) {
    throw Error(Errc::config_error, "give --captions and/or --ab");
  }
  if (!a.ab.empty() && a.candidate.empty()) {
    throw Error(Errc::config_error, "--ab needs --candidate");
  }
  if (!a.captions.empty() && a.output.empty()) {
    throw Error(Errc::config_error, "--captions needs --output");
  }
  auto banned = read_banned(a.banned);
  if (g.dry_run) {
    io.out << fmt::format("crowd: captions={} ab={} banned workers={}\n", a.captions.empty() ? "-" : a.captions,
                          a.ab.empty() ? "-" : a.ab, banned.size());
    return kExitOk;
  }
  if (!a.ab.empty()) {
    const auto text = read_file(a.ab);
    auto first = import_ab_export(text, a.candidate, {});
    ScamThresholds thresholds;
    thresholds.min_responses = static_cast<std::size_t>(std::max<std::int64_t>(a.min_responses, 1));
    const auto flagged = detect_scam_workers(first.workers, thresholds);
    for (const auto& f : flagged) {
      io.out << fmt::format("flagged worker {}: {} ({:.1f}%)\n", f.worker_id, f.reason, 100.0 * f.rate);
      banned.insert(f.worker_id);
    }
    const auto import = import_ab_export(text, a.candidate, banned);
    io.out << fmt::format("{} rows, {} malformed, {} from banned workers, {} unrelated\n", import.rows,
                          import.malformed, import.dropped_banned, import.unrelated);
    for (const auto& [name, scores] : import.experiments) {
      try {
        const auto s = ab_aggregate(scores);
        io.out << fmt::format("{}: mean {:.2f} +/- {:.2f}, win {:.1f}%, tie {:.1f}%, lose {:.1f}% (n={})\n", name,
                              s.mean, s.ci95, s.win_pct, s.tie_pct, s.lose_pct, s.n);
      } catch (const Error& e) {
        io.err << fmt::format("{}: {}\n", name, e.what());
      }
    }
  }
  if (!a.captions.empty()) {
    const auto raw = parse_crowd_captions(read_file(a.captions));
    const auto cleaned = clean_captions(raw, banned);
    std::string csv = csv::format_row({"uid", "worker_id", "text", "timestamp"});
    for (const auto& c : cleaned.kept) {
      csv += csv::format_row({c.uid, c.worker_id, c.text, c.timestamp});
    }
    write_output(a.output, csv);
    std::map<std::string_view, int> by_reason;
    for (const auto& r : cleaned.removed) {
      ++by_reason[removal_reason_name(r.reason)];
    }
    io.out << fmt::format("kept {} of {} captions\n", cleaned.kept.size(), raw.size());
    for (const auto& [reason, count] : by_reason) {
      io.out << fmt::format("  removed {}: {}\n", reason, count);
    }
  }
  return kExitOk;
}

// ---- cost -----------------------------------------------------------------

struct CostArgs {
  bool qa = false;
  bool no_selection = false;
  double objects = 1000.0;
  std::optional<double> avg_prompt_tokens;
};

auto cmd_cost(const Globals& g, const CostArgs& a, Console& io) -> int
{
  auto config = load_config(g, false);
  if (a.qa) {
    config.pipeline.qa_mode = true;
  }
  if (g.dry_run) {
    io.out << fmt::format("cost: {} objects, {} mode, selection {}\n", a.objects,
                          render_caption_mode(mode_of(config.pipeline)), a.no_selection ? "off" : "on");
    return kExitOk;
  }
  CostOptions options;
  options.caption_selection = !a.no_selection;
  options.objects = a.objects;
  options.measured_avg_prompt_tokens = a.avg_prompt_tokens;
  const auto cost = pipeline_cost(config.pipeline, config.rates, options);
  io.out << cost.render_table();
  if (a.objects > 0) {
    const auto per_1k = round_half_up_cents(cost.total.dollars() * 1000.0 / a.objects);
    const auto human = compare_to_human(config.rates, per_1k);
    io.out << fmt::format("human captioning: {} per 1k objects, {:.1f}x the cost, {:.1f}x slower\n",
                          human.human_cost.str(), human.cost_ratio, human.speed_ratio);
  }
  return kExitOk;
}

// ---- export ---------------------------------------------------------------

struct ExportArgs {
  std::string manifest;
  std::string format = "map";
  std::string output;
  bool stats = false;
};

auto cmd_export(const Globals& g, const ExportArgs& a, Console& io) -> int
{
  const auto config = load_config(g, a.manifest.empty());
  const auto manifest = pick(a.manifest, config.io.manifest, "manifest");
  if (a.format != "map" && a.format != "csv") {
    throw Error(Errc::config_error, "--format must be map or csv");
  }
  const auto format = a.format == "csv" ? ExportFormat::csv : ExportFormat::map;
  const auto file = read_manifest(manifest);
  if (g.dry_run) {
    io.out << fmt::format("export: {} entries from {} as {} -> {}\n", file.entries.size(), manifest, a.format,
                          a.output.empty() ? "stdout" : a.output);
    return kExitOk;
  }
  const auto exported = export_captions(file.entries, format);
  for (const auto& uid : exported.missing_captions) {
    io.err << fmt::format("warning: {} has no final caption\n", uid);
  }
  if (a.output.empty()) {
    io.out << exported.contents;
  } else {
    write_output(a.output, exported.contents);
    io.out << fmt::format("{} captions written to {}\n", file.entries.size() - exported.missing_captions.size(),
                          a.output);
  }
  if (a.stats) {
    std::vector<std::string> texts;
    for (const auto& e : file.entries) {
      if (e.final_caption) {
        texts.push_back(e.final_caption->text);
      }
    }
    (a.output.empty() ? io.err : io.out) << caption_length_stats(texts).render();
  }
  return kExitOk;
}

// ---- run-all --------------------------------------------------------------

struct RunAllArgs {
  std::optional<std::size_t> stop_after;
};

auto cmd_run_all(const Globals& g, const RunAllArgs& a, Console& io) -> int
{
  const auto config = load_config(g, true);
  const auto manifest_path = pick("", config.io.manifest, "io.manifest");
  const fs::path out_dir = pick("", config.io.out_dir, "io.out_dir");
  const auto file = read_manifest(manifest_path);
  std::vector<AssetRecord> assets;
  for (const auto& e : file.entries) {
    assets.push_back(e.asset);
  }
  if (g.dry_run) {
    io.out << fmt::format(
        "run-all: {} assets, {} views x {} samples, {} workers; caption via {}, embed via {}, summarize via {}; "
        "checkpoint {}; outputs in {}\n",
        assets.size(), config.pipeline.views_per_object, config.pipeline.samples_per_view, config.workers,
        config.captioner.base_url, config.embedder.base_url, config.summarizer.base_url,
        config.io.checkpoint_dir.empty() ? "off" : config.io.checkpoint_dir, out_dir.string());
    return kExitOk;
  }
  PipelineOptions options;
  options.workers = config.workers;
  if (!config.io.checkpoint_dir.empty()) {
    options.checkpoint_dir = config.io.checkpoint_dir;
  }
  options.stop_after = a.stop_after;
  options.image_root = config.io.render_dir;
  if (!config.detector_scores_path.empty()) {
    options.detector_scores = load_detector_scores(config.detector_scores_path);
  }
  if (!config.pipeline.blocklist_path.empty()) {
    options.blocklist = Blocklist::load(config.pipeline.blocklist_path);
  }
  options.rates = config.rates;

  const auto result = run_pipeline(assets, config.pipeline, make_backends(config), options);
  if (result.interrupted) {
    io.out << fmt::format("stopped early; progress saved to {}\n",
                          config.io.checkpoint_dir.empty() ? "nowhere" : config.io.checkpoint_dir);
    return kExitOk;
  }
  fs::create_directories(out_dir);
  write_manifest(out_dir / "manifest.jsonl", {kManifestVersion, result.config_hash}, result.entries);
  write_output(out_dir / "filter_report.jsonl", result.report.to_json_lines());
  std::vector<ordered_json> quarantine;
  for (const auto& q : result.quarantined) {
    quarantine.push_back({{"uid", q.uid}, {"stage", q.stage}, {"reason", q.reason}, {"detail", q.detail}});
    io.err << fmt::format("quarantined {}: {} at {}: {}\n", q.uid, q.reason, q.stage, q.detail);
  }
  write_output(out_dir / "quarantine.jsonl", to_jsonl(quarantine));
  for (const auto& w : result.warnings) {
    io.err << "warning: " << w << '\n';
  }
  io.out << result.report.render_table();
  io.out << result.cost.render_table();
  io.out << fmt::format("{} assets captioned, {} quarantined; manifest written to {}\n", result.entries.size(),
                        result.quarantined.size(), (out_dir / "manifest.jsonl").string());
  return result.quarantined.empty() ? kExitOk : kExitQuarantine;
}

// ---- vectors --------------------------------------------------------------

struct VectorsArgs {
  std::string output;
};

auto cmd_vectors(const Globals& g, const VectorsArgs& a, Console& io) -> int
{
  const auto vectors = protocol_test_vectors();
  if (g.dry_run) {
    io.out << fmt::format("vectors: {} cases -> {}\n", vectors.at("cases").size(),
                          a.output.empty() ? "stdout" : a.output);
    return kExitOk;
  }
  const auto text = vectors.dump(2) + "\n";
  if (a.output.empty()) {
    io.out << text;
  } else {
    write_output(a.output, text);
  }
  return kExitOk;
}

}  // namespace

auto protocol_test_vectors() -> ordered_json
{
  struct Case {
    std::string name;
    std::uint64_t seed;
    int dim;
    std::string path;
    json request;
  };
  const std::string png_bytes = std::string("\x89PNG\r\n\x1a\n", 8) + "view-0";
  const std::string summary =
      build_summary_prompt({"a red wooden chair with four legs", "a wooden chair"}, kDefaultSummaryPrompt);
  const std::vector<Case> cases{
      {"caption-b64-n5", 0, 512, "/v1/caption", {{"image_b64", base64_encode(png_bytes)}, {"n", 5}, {"nucleus_p", 0.9}}},
      {"caption-uri-n1", 7, 512, "/v1/caption", {{"image_uri", "obj/0.png"}, {"n", 1}, {"nucleus_p", 0.9}}},
      {"caption-qa-prompt", 0, 512, "/v1/caption",
       {{"image_b64", base64_encode(png_bytes)}, {"prompt", std::string(kDefaultQaPrompt1)}, {"n", 1},
        {"nucleus_p", 0.9}}},
      {"caption-n0-rejected", 0, 512, "/v1/caption", {{"image_uri", "obj/0.png"}, {"n", 0}, {"nucleus_p", 0.9}}},
      {"caption-missing-image", 0, 512, "/v1/caption", {{"n", 1}}},
      {"embed-text-dim8", 0, 8, "/v1/embed", {{"kind", "text"}, {"payload", "a red wooden chair"}}},
      {"embed-text-dim512", 42, 512, "/v1/embed", {{"kind", "text"}, {"payload", "a red wooden chair"}}},
      {"embed-image-dim8", 0, 8, "/v1/embed", {{"kind", "image"}, {"payload", base64_encode(png_bytes)}}},
      {"embed-unicode-dim4", 3, 4, "/v1/embed", {{"kind", "text"}, {"payload", "caf\xc3\xa9 \xe2\x98\x95"}}},
      {"embed-empty-rejected", 0, 8, "/v1/embed", {{"kind", "text"}, {"payload", ""}}},
      {"embed-bad-kind", 0, 8, "/v1/embed", {{"kind", "audio"}, {"payload", "x"}}},
      {"summarize-default-template", 0, 512, "/v1/summarize", {{"prompt", summary}}},
      {"summarize-no-quote", 0, 512, "/v1/summarize", {{"prompt", "  describe this object  "}}},
      {"summarize-empty-rejected", 0, 512, "/v1/summarize", {{"prompt", ""}}},
      {"unknown-path", 0, 512, "/v1/unknown", json::object()},
  };
  ordered_json out;
  out["format"] = "capforge-protocol-vectors";
  out["version"] = 1;
  out["cases"] = ordered_json::array();
  for (const auto& c : cases) {
    const auto body = c.request.dump();
    const auto response = MockBackend(c.seed, c.dim).handle(c.path, body);
    ordered_json entry;
    entry["name"] = c.name;
    entry["seed"] = c.seed;
    entry["dim"] = c.dim;
    entry["path"] = c.path;
    entry["request"] = body;
    entry["status"] = response.status;
    entry["response"] = response.body;
    out["cases"].push_back(std::move(entry));
  }
  return out;
}

auto run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) -> int
{
  CLI::App app{"capforge: multi-view 3D asset captioning pipeline"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  Globals g;
  std::uint64_t seed = 0;
  int workers = 0;
  app.add_option("--config", g.config_path, "Run configuration file (JSON)");
  app.add_flag("--dry-run", g.dry_run, "Print the work plan without side effects");
  auto* seed_opt = app.add_option("--seed", seed, "Seed for all stochastic mock behaviour");
  auto* workers_opt = app.add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Validate raw asset records into a manifest");
  ingest_cmd->add_option("--input", ingest.input, "Asset records, one JSON object per line")->required();
  ingest_cmd->add_option("--output", ingest.output, "Manifest to write (default io.manifest)");

  RenderPlanArgs render;
  auto* render_cmd = app.add_subcommand("render-plan", "Emit normalization and camera rig per asset");
  render_cmd->add_option("--manifest", render.manifest, "Input manifest (default io.manifest)");
  render_cmd->add_option("--output", render.output, "Render plan JSONL (default <out_dir>/render_plans.jsonl)");

  StageArgs caption_args;
  auto* caption_cmd = app.add_subcommand("caption", "Sample candidate captions for every view");
  caption_cmd->add_option("--manifest", caption_args.input, "Input manifest (default io.manifest)");
  caption_cmd->add_option("--images", caption_args.images, "Render root (default io.render_dir)");
  caption_cmd->add_option("--output", caption_args.output, "Candidates JSONL (default <out_dir>/candidates.jsonl)");

  StageArgs select_args;
  auto* select_cmd = app.add_subcommand("select", "Pick the best candidate per view by embedding similarity");
  select_cmd->add_option("--candidates", select_args.input, "Output of caption")->required();
  select_cmd->add_option("--output", select_args.output, "Selections JSONL (default <out_dir>/selections.jsonl)");

  StageArgs consolidate_args;
  auto* consolidate_cmd = app.add_subcommand("consolidate", "Summarize selected view captions per object");
  consolidate_cmd->add_option("--selections", consolidate_args.input, "Output of select")->required();
  consolidate_cmd->add_option("--output", consolidate_args.output, "Captions JSONL (default <out_dir>/captions.jsonl)");

  FilterArgs filter;
  auto* filter_cmd = app.add_subcommand("filter", "License, render-info, detector and blocklist filtering");
  filter_cmd->add_option("--manifest", filter.manifest, "Input manifest (default io.manifest)");
  filter_cmd->add_option("--captions", filter.captions, "Output of consolidate");
  filter_cmd->add_option("--output", filter.output, "Filtered manifest (default <out_dir>/manifest.jsonl)");
  filter_cmd->add_option("--report", filter.report, "Filter report JSONL");

  EvaluateArgs evaluate;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Caption and generation quality metrics");
  evaluate_cmd->add_option("--scores", evaluate.scores, "Image x text score matrix for retrieval metrics");
  evaluate_cmd->add_option("--ks", evaluate.ks, "Comma-separated k values")->capture_default_str();
  evaluate_cmd->add_option("--method", evaluate.method, "Row label")->capture_default_str();
  evaluate_cmd->add_option("--clip-images", evaluate.clip_images, "Image embeddings, one per line");
  evaluate_cmd->add_option("--clip-texts", evaluate.clip_texts, "Caption embeddings, row-paired with images");
  evaluate_cmd->add_option("--fid-reference", evaluate.fid_reference, "Reference feature vectors");
  evaluate_cmd->add_option("--fid-generated", evaluate.fid_generated, "Generated feature vectors");

  CrowdArgs crowd;
  auto* crowd_cmd = app.add_subcommand("crowd", "Clean crowd captions and aggregate A/B judgments");
  crowd_cmd->add_option("--captions", crowd.captions, "Crowd caption export (CSV)");
  crowd_cmd->add_option("--output", crowd.output, "Cleaned caption CSV");
  crowd_cmd->add_option("--banned", crowd.banned, "Banned worker ids, one per line");
  crowd_cmd->add_option("--ab", crowd.ab, "A/B judgment export (CSV)");
  crowd_cmd->add_option("--candidate", crowd.candidate, "Method whose captions are judged");
  crowd_cmd->add_option("--min-responses", crowd.min_responses, "Responses needed before a worker is screened")
      ->capture_default_str();

  CostArgs cost;
  std::optional<double> avg_tokens;
  auto* cost_cmd = app.add_subcommand("cost", "Price the pipeline per batch of objects");
  cost_cmd->add_flag("--qa", cost.qa, "Two-pass question-answering captioning");
  cost_cmd->add_flag("--no-selection", cost.no_selection, "Send every candidate to the summarizer");
  cost_cmd->add_option("--objects", cost.objects, "Batch size")->capture_default_str()->check(CLI::PositiveNumber);
  cost_cmd->add_option("--avg-prompt-tokens", avg_tokens, "Measured average summary prompt tokens");

  ExportArgs export_args;
  auto* export_cmd = app.add_subcommand("export", "Write uid -> caption as JSON map or CSV");
  export_cmd->add_option("--manifest", export_args.manifest, "Input manifest (default io.manifest)");
  export_cmd->add_option("--format", export_args.format, "map or csv")->capture_default_str();
  export_cmd->add_option("--output", export_args.output, "Output file (default stdout)");
  export_cmd->add_flag("--stats", export_args.stats, "Print caption length statistics");

  RunAllArgs run_all;
  std::size_t stop_after = 0;
  auto* run_all_cmd = app.add_subcommand("run-all", "Caption, select, consolidate and filter with checkpointing");
  auto* stop_opt = run_all_cmd->add_option("--stop-after", stop_after, "Process at most this many assets, then stop");

  VectorsArgs vectors;
  auto* vectors_cmd = app.add_subcommand("vectors", "Emit backend protocol test vectors from the mock");
  vectors_cmd->add_option("--output", vectors.output, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitFatal;
  }
  if (*seed_opt) {
    g.seed = seed;
  }
  if (*workers_opt) {
    g.workers = workers;
  }
  if (*stop_opt) {
    run_all.stop_after = stop_after;
  }
  cost.avg_prompt_tokens = avg_tokens;

  Console io{out, err};
  try {
    if (ingest_cmd->parsed()) return cmd_ingest(g, ingest, io);
    if (render_cmd->parsed()) return cmd_render_plan(g, render, io);
    if (caption_cmd->parsed()) return cmd_caption(g, caption_args, io);
    if (select_cmd->parsed()) return cmd_select(g, select_args, io);
    if (consolidate_cmd->parsed()) return cmd_consolidate(g, consolidate_args, io);
    if (filter_cmd->parsed()) return cmd_filter(g, filter, io);
    if (evaluate_cmd->parsed()) return cmd_evaluate(g, evaluate, io);
    if (crowd_cmd->parsed()) return cmd_crowd(g, crowd, io);
    if (cost_cmd->parsed()) return cmd_cost(g, cost, io);
    if (export_cmd->parsed()) return cmd_export(g, export_args, io);
    if (run_all_cmd->parsed()) return cmd_run_all(g, run_all, io);
    if (vectors_cmd->parsed()) return cmd_vectors(g, vectors, io);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFatal;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFatal;
  }
  return kExitFatal;
}

}  // namespace capforge
