#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace capforge {

struct CrowdCaption {
  std::string uid;
  std::string worker_id;
  std::string text;
  /// ISO 8601; compared lexicographically.
  std::string timestamp;

  friend auto operator==(const CrowdCaption&, const CrowdCaption&) -> bool = default;
};

enum class RemovalReason { banned_worker, too_short, duplicate, mass_repeat };

auto removal_reason_name(RemovalReason reason) -> std::string_view;

struct RemovedCaption {
  CrowdCaption caption;
  RemovalReason reason;
};

struct CleanOptions {
  /// Captions with at most this many words are dropped.
  std::int64_t max_short_words = 1;
  /// Texts appearing more than this many times dataset-wide are dropped.
  std::int64_t max_repeats = 30;
};

struct CleanResult {
  std::vector<CrowdCaption> kept;
  std::vector<RemovedCaption> removed;
};

/// Rules, first match wins: banned worker, too short, duplicate text on the
/// same object (earliest timestamp kept, then input order), text repeated
/// more than max_repeats times among the survivors. Kept captions keep
/// their input order. Idempotent.
auto clean_captions(const std::vector<CrowdCaption>& raw, const std::set<std::string>& banned,
                    const CleanOptions& options = {}) -> CleanResult;

/// Columns uid, worker_id, text, timestamp (header row required).
auto parse_crowd_captions(std::string_view csv_text) -> std::vector<CrowdCaption>;

struct WorkerResponse {
  int raw_score = 3;  ///< 1 = left much better ... 5 = right much better
  std::optional<std::int64_t> left_length;
  std::optional<std::int64_t> right_length;
};

struct WorkerRecord {
  std::string worker_id;
  std::vector<WorkerResponse> responses;
  bool banned = false;
  std::optional<std::string> ban_reason;
};

struct ScamThresholds {
  std::size_t min_responses = 30;
  double constancy = 0.95;
  double length_bias = 0.95;
};

struct FlaggedWorker {
  std::string worker_id;
  std::string reason;  ///< "constant-answer" or "length-bias"
  double rate = 0.0;
};

/// Workers with enough responses that almost always give the same answer,
/// or almost always prefer the shorter (or the longer) caption.
auto detect_scam_workers(const std::vector<WorkerRecord>& records, const ScamThresholds& thresholds = {})
    -> std::vector<FlaggedWorker>;

/// Marks flagged workers banned with their reason.
void apply_bans(std::vector<WorkerRecord>& records, const std::vector<FlaggedWorker>& flagged);

/// Maps a raw judgment to the candidate's point of view: 6 - s when the
/// candidate was shown on the left, s when on the right.
auto orient_score(int raw_score, bool candidate_on_left) -> int;

struct AbImport {
  /// "<candidate> vs <baseline>" -> oriented scores, in file order.
  std::map<std::string, std::vector<int>> experiments;
  /// Raw per-worker responses of every well-formed row, for scam screening.
  std::vector<WorkerRecord> workers;
  std::int64_t rows = 0;
  std::int64_t malformed = 0;
  std::int64_t dropped_banned = 0;
  std::int64_t unrelated = 0;
};

/// Columns task_id, uid, left_method, right_method, score, worker_id and
/// optionally left_caption/right_caption (or left_length/right_length in
/// words). Rows not involving `candidate_method` count as unrelated.
auto import_ab_export(std::string_view csv_text, const std::string& candidate_method,
                      const std::set<std::string>& banned_workers) -> AbImport;

}  // namespace capforge
