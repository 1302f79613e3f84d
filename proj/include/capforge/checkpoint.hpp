#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include <json.hpp>

namespace capforge {

enum class PipelineStage { CAPTIONED, SELECTED, CONSOLIDATED, FILTERED };

auto render_stage(PipelineStage stage) -> std::string_view;
auto parse_stage(std::string_view text) -> std::optional<PipelineStage>;

struct Checkpoint {
  std::set<std::string> completed_uids;
  PipelineStage stage = PipelineStage::FILTERED;
  std::string content_hash;
};

/// Header line {format, version, config_hash, stage} followed by one uid
/// per line.
auto serialize_checkpoint(const Checkpoint& checkpoint) -> std::string;
auto parse_checkpoint(std::string_view text) -> Checkpoint;

/// Resumable progress for one pipeline run, kept in a directory:
///   checkpoint  committed uids (atomically replaced on every commit)
///   journal     append-only per-asset results, one JSON object per line
/// A journal line only counts once its uid is committed, so a torn final
/// line or an uncommitted result is recomputed on resume.
class CheckpointStore {
 public:
  /// Opens or creates the store. Throws Error(checkpoint_mismatch) if an
  /// existing checkpoint was written under a different config hash or stage.
  CheckpointStore(std::filesystem::path dir, std::string config_hash, PipelineStage stage);

  [[nodiscard]] auto completed() const -> std::set<std::string>;
  /// Journal records of committed uids (last record per uid wins).
  [[nodiscard]] auto recovered() const -> const std::map<std::string, nlohmann::json>& { return recovered_; }

  /// Appends one result to the journal; durable after the next commit().
  void record(const std::string& uid, const nlohmann::json& result);
  void commit();

 private:
  std::filesystem::path dir_;
  Checkpoint state_;
  std::set<std::string> pending_;
  std::map<std::string, nlohmann::json> recovered_;
  std::ofstream journal_;
  mutable std::mutex mutex_;
};

}  // namespace capforge
