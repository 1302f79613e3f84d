#include "capforge/crowd_clean.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>
#include <unordered_map>

#include <fmt/format.h>

#include "capforge/csv.hpp"
#include "capforge/errors.hpp"
#include "capforge/tokenizer.hpp"

namespace capforge {

auto removal_reason_name(RemovalReason reason) -> std::string_view
{
  switch (reason) {
    case RemovalReason::banned_worker: return "banned-worker";
    case RemovalReason::too_short: return "too-short";
    case RemovalReason::duplicate: return "duplicate";
    case RemovalReason::mass_repeat: return "mass-repeat";
  }
  return "unknown";
}

auto clean_captions(const std::vector<CrowdCaption>& raw, const std::set<std::string>& banned,
                    const CleanOptions& options) -> CleanResult
{
  std::vector<std::optional<RemovalReason>> verdict(raw.size());

  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (banned.contains(raw[i].worker_id)) {
      verdict[i] = RemovalReason::banned_worker;
    } else if (count_words(raw[i].text) <= options.max_short_words) {
      verdict[i] = RemovalReason::too_short;
    }
  }

  // Earliest (timestamp, input position) per (uid, text) survives.
  std::vector<std::size_t> order(raw.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return raw[a].timestamp < raw[b].timestamp; });
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto i : order) {
    if (verdict[i]) {
      continue;
    }
    if (!seen.emplace(raw[i].uid, raw[i].text).second) {
      verdict[i] = RemovalReason::duplicate;
    }
  }

  std::unordered_map<std::string, std::int64_t> frequency;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!verdict[i]) {
      ++frequency[raw[i].text];
    }
  }
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!verdict[i] && frequency[raw[i].text] > options.max_repeats) {
      verdict[i] = RemovalReason::mass_repeat;
    }
  }

  CleanResult result;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (verdict[i]) {
      result.removed.push_back({raw[i], *verdict[i]});
    } else {
      result.kept.push_back(raw[i]);
    }
  }
  return result;
}

namespace {

auto column_index(const csv::Row& header, std::string_view name) -> std::optional<std::size_t>
{
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    return std::nullopt;
  }
  return static_cast<std::size_t>(it - header.begin());
}

auto require_column(const csv::Row& header, std::string_view name) -> std::size_t
{
  const auto idx = column_index(header, name);
  if (!idx) {
    throw Error(Errc::parse_error, fmt::format("export lacks column '{}'", name));
  }
  return *idx;
}

auto parse_int(std::string_view text) -> std::optional<std::int64_t>
{
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    return std::nullopt;
  }
  return v;
}

}  // namespace

auto parse_crowd_captions(std::string_view csv_text) -> std::vector<CrowdCaption>
{
  const auto rows = csv::parse(csv_text);
  if (rows.empty()) {
    return {};
  }
  const auto& header = rows.front();
  const auto uid = require_column(header, "uid");
  const auto worker = require_column(header, "worker_id");
  const auto text = require_column(header, "text");
  const auto timestamp = column_index(header, "timestamp");
  std::vector<CrowdCaption> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size()) {
      throw Error(Errc::parse_error, fmt::format("caption export row {} has {} fields", r + 1, row.size()));
    }
    out.push_back({row[uid], row[worker], row[text], timestamp ? row[*timestamp] : std::string{}});
  }
  return out;
}

auto detect_scam_workers(const std::vector<WorkerRecord>& records, const ScamThresholds& thresholds)
    -> std::vector<FlaggedWorker>
{
  std::vector<FlaggedWorker> flagged;
  for (const auto& w : records) {
    const auto n = w.responses.size();
    if (n < std::max<std::size_t>(thresholds.min_responses, 1)) {
      continue;
    }
    std::array<std::size_t, 6> histogram{};
    std::size_t longer = 0;
    std::size_t shorter = 0;
    for (const auto& r : w.responses) {
      if (r.raw_score >= 1 && r.raw_score <= 5) {
        ++histogram[static_cast<std::size_t>(r.raw_score)];
      }
      if (r.raw_score == 3 || !r.left_length || !r.right_length || *r.left_length == *r.right_length) {
        continue;
      }
      const bool chose_left = r.raw_score < 3;
      const bool left_longer = *r.left_length > *r.right_length;
      (chose_left == left_longer ? longer : shorter) += 1;
    }
    const auto most_common = *std::max_element(histogram.begin(), histogram.end());
    const double constancy = static_cast<double>(most_common) / static_cast<double>(n);
    if (constancy >= thresholds.constancy) {
      flagged.push_back({w.worker_id, "constant-answer", constancy});
      continue;
    }
    const auto decisive = longer + shorter;
    if (decisive >= std::max<std::size_t>(thresholds.min_responses, 1)) {
      const double bias = static_cast<double>(std::max(longer, shorter)) / static_cast<double>(decisive);
      if (bias >= thresholds.length_bias) {
        flagged.push_back({w.worker_id, "length-bias", bias});
      }
    }
  }
  return flagged;
}

void apply_bans(std::vector<WorkerRecord>& records, const std::vector<FlaggedWorker>& flagged)
{
  for (auto& w : records) {
    const auto it = std::find_if(flagged.begin(), flagged.end(),
                                 [&](const FlaggedWorker& f) { return f.worker_id == w.worker_id; });
    if (it != flagged.end()) {
      w.banned = true;
      w.ban_reason = it->reason;
    }
  }
}

auto orient_score(int raw_score, bool candidate_on_left) -> int
{
  return candidate_on_left ? 6 - raw_score : raw_score;
}

auto import_ab_export(std::string_view csv_text, const std::string& candidate_method,
                      const std::set<std::string>& banned_workers) -> AbImport
{
  AbImport out;
  const auto rows = csv::parse(csv_text);
  if (rows.empty()) {
    return out;
  }
  const auto& header = rows.front();
  require_column(header, "task_id");
  require_column(header, "uid");
  const auto left = require_column(header, "left_method");
  const auto right = require_column(header, "right_method");
  const auto score = require_column(header, "score");
  const auto worker = require_column(header, "worker_id");
  const auto left_caption = column_index(header, "left_caption");
  const auto right_caption = column_index(header, "right_caption");
  const auto left_length = column_index(header, "left_length");
  const auto right_length = column_index(header, "right_length");

  std::map<std::string, std::size_t> worker_slot;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    ++out.rows;
    if (row.size() != header.size()) {
      ++out.malformed;
      continue;
    }
    const auto s = parse_int(row[score]);
    if (!s || *s < 1 || *s > 5 || row[worker].empty() || row[left].empty() || row[right].empty()) {
      ++out.malformed;
      continue;
    }
    WorkerResponse response;
    response.raw_score = static_cast<int>(*s);
    if (left_caption && right_caption) {
      response.left_length = count_words(row[*left_caption]);
      response.right_length = count_words(row[*right_caption]);
    } else if (left_length && right_length) {
      response.left_length = parse_int(row[*left_length]);
      response.right_length = parse_int(row[*right_length]);
    }
    auto [slot, inserted] = worker_slot.try_emplace(row[worker], out.workers.size());
    if (inserted) {
      out.workers.push_back({row[worker], {}, false, std::nullopt});
    }
    out.workers[slot->second].responses.push_back(response);

    if (banned_workers.contains(row[worker])) {
      ++out.dropped_banned;
      continue;
    }
    const bool on_left = row[left] == candidate_method;
    const bool on_right = row[right] == candidate_method;
    if (on_left == on_right) {
      ++out.unrelated;
      continue;
    }
    const auto& baseline = on_left ? row[right] : row[left];
    out.experiments[candidate_method + " vs " + baseline].push_back(orient_score(response.raw_score, on_left));
  }
  for (auto& w : out.workers) {
    if (banned_workers.contains(w.worker_id)) {
      w.banned = true;
      w.ban_reason = "banned";
    }
  }
  return out;
}

}  // namespace capforge
