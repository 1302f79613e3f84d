#include "capforge/ethics_filter.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "capforge/errors.hpp"

namespace capforge {

namespace {

auto is_word_byte(char c) -> bool
{
  const auto uc = static_cast<unsigned char>(c);
  return uc >= 0x80 || std::isalnum(uc) != 0;
}

}  // namespace

auto blocklist_words(std::string_view text) -> std::vector<std::string>
{
  std::vector<std::string> words;
  std::string current;
  for (const char c : text) {
    if (is_word_byte(c)) {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) {
    words.push_back(std::move(current));
  }
  return words;
}

auto license_filter(const std::vector<AssetRecord>& assets, const std::set<LicenseClass>& allowlist) -> Partition
{
  Partition p;
  for (const auto& a : assets) {
    (allowlist.contains(a.license) ? p.kept : p.removed).push_back(a);
  }
  return p;
}

auto render_info_filter(const std::vector<AssetRecord>& assets) -> Partition
{
  Partition p;
  for (const auto& a : assets) {
    (a.has_camera_info ? p.kept : p.removed).push_back(a);
  }
  return p;
}

auto detector_filter(const DetectorScores& scores, double threshold) -> FilterVerdict
{
  const double face = scores.face_score.value_or(0.0);
  const double nsfw = scores.nsfw_score.value_or(0.0);
  FilterVerdict v;
  if (face >= threshold) {
    v.removed = true;
    v.reason = fmt::format("face score {} >= {}", face, threshold);
  } else if (nsfw >= threshold) {
    v.removed = true;
    v.reason = fmt::format("nsfw score {} >= {}", nsfw, threshold);
  }
  return v;
}

Blocklist::Blocklist(const std::vector<std::string>& terms)
{
  for (const auto& term : terms) {
    auto words = blocklist_words(term);
    if (words.empty()) {
      continue;
    }
    std::string display;
    for (const auto& w : words) {
      display += display.empty() ? w : " " + w;
    }
    if (std::find(display_.begin(), display_.end(), display) != display_.end()) {
      continue;
    }
    terms_.push_back(std::move(words));
    display_.push_back(std::move(display));
  }
}

auto Blocklist::parse(std::string_view text) -> Blocklist
{
  std::vector<std::string> terms;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.resize(hash);
    }
    if (line.find_first_not_of(" \t\r") != std::string::npos) {
      terms.push_back(line);
    }
  }
  return Blocklist(terms);
}

auto Blocklist::load(const std::string& path) -> Blocklist
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(Errc::config_error, "cannot read blocklist " + path);
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

auto Blocklist::match(std::string_view caption) const -> std::vector<std::string>
{
  std::vector<std::string> found;
  if (terms_.empty()) {
    return found;
  }
  const auto words = blocklist_words(caption);
  std::vector<bool> hit(terms_.size(), false);
  for (std::size_t start = 0; start < words.size(); ++start) {
    for (std::size_t t = 0; t < terms_.size(); ++t) {
      const auto& term = terms_[t];
      if (hit[t] || start + term.size() > words.size()) {
        continue;
      }
      if (std::equal(term.begin(), term.end(), words.begin() + static_cast<std::ptrdiff_t>(start))) {
        hit[t] = true;
        found.push_back(display_[t]);
      }
    }
  }
  return found;
}

auto blocklist_filter(std::string_view caption, const Blocklist& blocklist) -> FilterVerdict
{
  FilterVerdict v;
  v.matched_terms = blocklist.match(caption);
  if (!v.matched_terms.empty()) {
    v.removed = true;
    std::string joined;
    for (const auto& t : v.matched_terms) {
      joined += joined.empty() ? t : ", " + t;
    }
    v.reason = "blocked term: " + joined;
  }
  return v;
}

// -- FilterReport -----------------------------------------------------------

void FilterReport::add_stage(std::string name, std::int64_t initial_if_first, std::int64_t removed)
{
  StageCount s;
  s.stage = std::move(name);
  s.input = stages.empty() ? initial_if_first : stages.back().output;
  s.removed = removed;
  s.output = s.input - removed;
  stages.push_back(std::move(s));
}

auto FilterReport::final_output() const -> std::int64_t
{
  return stages.empty() ? 0 : stages.back().output;
}

auto FilterReport::consistent() const -> bool
{
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& s = stages[i];
    if (s.output != s.input - s.removed || s.removed < 0 || s.output < 0) {
      return false;
    }
    if (i > 0 && s.input != stages[i - 1].output) {
      return false;
    }
  }
  return true;
}

auto FilterReport::render_table() const -> std::string
{
  std::string out = fmt::format("{:<14}{:>12}{:>12}{:>12}\n", "stage", "input", "removed", "output");
  for (const auto& s : stages) {
    out += fmt::format("{:<14}{:>12}{:>12}{:>12}\n", s.stage, s.input, s.removed, s.output);
  }
  return out;
}

auto FilterReport::to_json_lines() const -> std::string
{
  std::string out;
  for (const auto& s : stages) {
    nlohmann::ordered_json j{{"type", "stage"}, {"stage", s.stage}, {"input", s.input},
                             {"removed", s.removed}, {"output", s.output}};
    out += j.dump() + "\n";
  }
  for (const auto& r : rejections) {
    nlohmann::ordered_json j{{"type", "rejection"}, {"uid", r.uid}, {"stage", r.stage}, {"reason", r.reason}};
    out += j.dump() + "\n";
  }
  return out;
}

// -- chain ------------------------------------------------------------------

auto admit_assets(const std::vector<AssetRecord>& assets, const std::map<std::string, DetectorScores>& scores,
                  const PipelineConfig& config) -> AdmissionResult
{
  AdmissionResult result;
  auto& report = result.report;
  const auto initial = static_cast<std::int64_t>(assets.size());

  auto licensed = license_filter(assets, config.license_allowlist);
  for (const auto& a : licensed.removed) {
    report.rejections.push_back({a.uid, std::string(stage::license),
                                 fmt::format("license {} not allowed", render_license(a.license))});
  }
  report.add_stage(std::string(stage::license), initial, static_cast<std::int64_t>(licensed.removed.size()));

  auto renderable = render_info_filter(licensed.kept);
  for (const auto& a : renderable.removed) {
    report.rejections.push_back({a.uid, std::string(stage::render_info), "missing camera information"});
  }
  report.add_stage(std::string(stage::render_info), initial, static_cast<std::int64_t>(renderable.removed.size()));

  std::int64_t detected = 0;
  for (auto& a : renderable.kept) {
    DetectorScores s{a.uid, std::nullopt, std::nullopt};
    if (const auto it = scores.find(a.uid); it != scores.end()) {
      s = it->second;
    } else if (!scores.empty()) {
      result.warnings.push_back(fmt::format("{}: no detector scores, treated as absent", a.uid));
    }
    const auto v = detector_filter(s, config.detector_threshold);
    if (v.removed) {
      ++detected;
      report.rejections.push_back({a.uid, std::string(stage::detector), v.reason});
    } else {
      result.admitted.push_back(std::move(a));
    }
  }
  report.add_stage(std::string(stage::detector), initial, detected);
  return result;
}

auto screen_captions(const std::vector<AssetRecord>& assets, const std::map<std::string, std::string>& captions,
                     const Blocklist& blocklist, FilterReport& report, std::vector<std::string>& warnings)
    -> std::vector<AssetRecord>
{
  std::vector<AssetRecord> kept;
  std::int64_t removed = 0;
  for (const auto& a : assets) {
    const auto it = captions.find(a.uid);
    if (it == captions.end()) {
      warnings.push_back(fmt::format("{}: no caption to screen", a.uid));
      kept.push_back(a);
      continue;
    }
    const auto v = blocklist_filter(it->second, blocklist);
    if (v.removed) {
      ++removed;
      report.rejections.push_back({a.uid, std::string(stage::blocklist), v.reason});
    } else {
      kept.push_back(a);
    }
  }
  report.add_stage(std::string(stage::blocklist), static_cast<std::int64_t>(assets.size()), removed);
  return kept;
}

auto apply_filter_chain(const std::vector<AssetRecord>& assets, const std::map<std::string, std::string>& captions,
                        const std::map<std::string, DetectorScores>& scores, const PipelineConfig& config,
                        const Blocklist& blocklist) -> FilterChainResult
{
  auto admission = admit_assets(assets, scores, config);
  FilterChainResult result;
  result.report = std::move(admission.report);
  result.warnings = std::move(admission.warnings);
  result.kept = screen_captions(admission.admitted, captions, blocklist, result.report, result.warnings);
  return result;
}

auto load_detector_scores(const std::string& path) -> std::map<std::string, DetectorScores>
{
  std::ifstream in(path);
  if (!in) {
    throw Error(Errc::io_error, "cannot read detector scores " + path);
  }
  std::map<std::string, DetectorScores> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    try {
      const auto j = nlohmann::json::parse(line);
      DetectorScores s;
      s.uid = j.at("uid").get<std::string>();
      for (const auto* key : {"face_score", "nsfw_score"}) {
        if (j.contains(key) && !j.at(key).is_null()) {
          const double v = j.at(key).get<double>();
          if (!(v >= 0.0 && v <= 1.0)) {
            throw Error(Errc::parse_error, fmt::format("{}:{}: {} outside [0,1]", path, line_no, key));
          }
          (std::string_view(key) == "face_score" ? s.face_score : s.nsfw_score) = v;
        }
      }
      out[s.uid] = std::move(s);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::parse_error, fmt::format("{}:{}: {}", path, line_no, e.what()));
    }
  }
  return out;
}

}  // namespace capforge
