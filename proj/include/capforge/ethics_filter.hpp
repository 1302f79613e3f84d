#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "capforge/core_types.hpp"

namespace capforge {

struct DetectorScores {
  std::string uid;
  std::optional<double> face_score;
  std::optional<double> nsfw_score;
};

struct FilterVerdict {
  bool removed = false;
  std::string reason;
  std::vector<std::string> matched_terms;
};

struct Partition {
  std::vector<AssetRecord> kept;
  std::vector<AssetRecord> removed;
};

auto license_filter(const std::vector<AssetRecord>& assets, const std::set<LicenseClass>& allowlist) -> Partition;
auto render_info_filter(const std::vector<AssetRecord>& assets) -> Partition;

/// Removed iff either score reaches the threshold (inclusive). Absent scores
/// count as 0.
auto detector_filter(const DetectorScores& scores, double threshold) -> FilterVerdict;

/// Case-insensitive, word-boundary term matcher. Words are maximal runs of
/// ASCII letters, digits and non-ASCII bytes; a multi-word term matches a
/// consecutive run of caption words.
class Blocklist {
 public:
  Blocklist() = default;
  explicit Blocklist(const std::vector<std::string>& terms);

  /// One term per line, '#' starts a comment, blank lines ignored.
  /// Throws Error(config_error) if the file cannot be read.
  static auto load(const std::string& path) -> Blocklist;
  static auto parse(std::string_view text) -> Blocklist;

  /// Terms found in the caption, in first-occurrence order, each once.
  [[nodiscard]] auto match(std::string_view caption) const -> std::vector<std::string>;
  [[nodiscard]] auto size() const noexcept -> std::size_t { return terms_.size(); }
  [[nodiscard]] auto empty() const noexcept -> bool { return terms_.empty(); }

 private:
  std::vector<std::vector<std::string>> terms_;
  std::vector<std::string> display_;
};

auto blocklist_filter(std::string_view caption, const Blocklist& blocklist) -> FilterVerdict;

/// Lowercased words of `text` under the blocklist tokenization.
auto blocklist_words(std::string_view text) -> std::vector<std::string>;

struct StageCount {
  std::string stage;
  std::int64_t input = 0;
  std::int64_t removed = 0;
  std::int64_t output = 0;
};

struct Rejection {
  std::string uid;
  std::string stage;
  std::string reason;
};

struct FilterReport {
  std::vector<StageCount> stages;
  std::vector<Rejection> rejections;

  /// Appends a stage whose input is the previous stage's output (or
  /// `initial` for the first stage).
  void add_stage(std::string name, std::int64_t initial_if_first, std::int64_t removed);
  [[nodiscard]] auto final_output() const -> std::int64_t;
  /// output = input - removed per stage, and stages chain.
  [[nodiscard]] auto consistent() const -> bool;
  [[nodiscard]] auto render_table() const -> std::string;
  /// One JSON object per line: stage rows first, then rejections.
  [[nodiscard]] auto to_json_lines() const -> std::string;
};

namespace stage {
inline constexpr std::string_view license = "license";
inline constexpr std::string_view render_info = "render-info";
inline constexpr std::string_view detector = "detector";
inline constexpr std::string_view captioning = "captioning";
inline constexpr std::string_view blocklist = "blocklist";
}  // namespace stage

struct AdmissionResult {
  std::vector<AssetRecord> admitted;
  FilterReport report;
  std::vector<std::string> warnings;
};

/// License, render-info and detector stages: everything decidable before
/// captioning.
auto admit_assets(const std::vector<AssetRecord>& assets, const std::map<std::string, DetectorScores>& scores,
                  const PipelineConfig& config) -> AdmissionResult;

/// Blocklist stage over captioned assets; appends to `report`.
auto screen_captions(const std::vector<AssetRecord>& assets, const std::map<std::string, std::string>& captions,
                     const Blocklist& blocklist, FilterReport& report, std::vector<std::string>& warnings)
    -> std::vector<AssetRecord>;

struct FilterChainResult {
  std::vector<AssetRecord> kept;
  FilterReport report;
  std::vector<std::string> warnings;
};

/// license -> render-info -> detector -> blocklist.
auto apply_filter_chain(const std::vector<AssetRecord>& assets, const std::map<std::string, std::string>& captions,
                        const std::map<std::string, DetectorScores>& scores, const PipelineConfig& config,
                        const Blocklist& blocklist) -> FilterChainResult;

/// Line-delimited {uid, face_score?, nsfw_score?}. Scores outside [0,1] are
/// rejected with Error(parse_error).
auto load_detector_scores(const std::string& path) -> std::map<std::string, DetectorScores>;

}  // namespace capforge
