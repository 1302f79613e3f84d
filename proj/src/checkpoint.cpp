#include "capforge/checkpoint.hpp"

#include <sstream>

#include <fmt/format.h>

#include "capforge/dataset_store.hpp"
#include "capforge/errors.hpp"

namespace capforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {
constexpr std::string_view kCheckpointFormat = "capforge-checkpoint";
constexpr int kCheckpointVersion = 1;
}  // namespace

auto render_stage(PipelineStage stage) -> std::string_view
{
  switch (stage) {
    case PipelineStage::CAPTIONED: return "CAPTIONED";
    case PipelineStage::SELECTED: return "SELECTED";
    case PipelineStage::CONSOLIDATED: return "CONSOLIDATED";
    case PipelineStage::FILTERED: return "FILTERED";
  }
  return "FILTERED";
}

auto parse_stage(std::string_view text) -> std::optional<PipelineStage>
{
  for (const auto s : {PipelineStage::CAPTIONED, PipelineStage::SELECTED, PipelineStage::CONSOLIDATED,
                       PipelineStage::FILTERED}) {
    if (render_stage(s) == text) {
      return s;
    }
  }
  return std::nullopt;
}

auto serialize_checkpoint(const Checkpoint& checkpoint) -> std::string
{
  nlohmann::ordered_json head;
  head["format"] = kCheckpointFormat;
  head["version"] = kCheckpointVersion;
  head["config_hash"] = checkpoint.content_hash;
  head["stage"] = render_stage(checkpoint.stage);
  std::string out = head.dump() + "\n";
  for (const auto& uid : checkpoint.completed_uids) {
    out += json(uid).dump() + "\n";
  }
  return out;
}

auto parse_checkpoint(std::string_view text) -> Checkpoint
{
  std::istringstream in{std::string(text)};
  std::string line;
  Checkpoint cp;
  try {
    if (!std::getline(in, line)) {
      throw Error(Errc::parse_error, "empty checkpoint");
    }
    const auto head = json::parse(line);
    if (head.value("format", std::string{}) != kCheckpointFormat || head.value("version", 0) != kCheckpointVersion) {
      throw Error(Errc::parse_error, "not a capforge checkpoint");
    }
    cp.content_hash = head.at("config_hash").get<std::string>();
    const auto stage = parse_stage(head.at("stage").get<std::string>());
    if (!stage) {
      throw Error(Errc::parse_error, "unknown checkpoint stage");
    }
    cp.stage = *stage;
    while (std::getline(in, line)) {
      if (!line.empty()) {
        cp.completed_uids.insert(json::parse(line).get<std::string>());
      }
    }
  } catch (const json::exception& e) {
    throw Error(Errc::parse_error, std::string("checkpoint: ") + e.what());
  }
  return cp;
}

CheckpointStore::CheckpointStore(fs::path dir, std::string config_hash, PipelineStage stage) : dir_(std::move(dir))
{
  fs::create_directories(dir_);
  const auto checkpoint_path = dir_ / "checkpoint";
  const auto journal_path = dir_ / "journal";
  if (fs::exists(checkpoint_path)) {
    state_ = parse_checkpoint(read_file(checkpoint_path));
    if (state_.content_hash != config_hash) {
      throw Error(Errc::checkpoint_mismatch,
                  fmt::format("checkpoint config {} differs from current config {}", state_.content_hash, config_hash));
    }
    if (state_.stage != stage) {
      throw Error(Errc::checkpoint_mismatch, fmt::format("checkpoint stage {} differs from {}",
                                                         render_stage(state_.stage), render_stage(stage)));
    }
    if (fs::exists(journal_path)) {
      std::istringstream journal(read_file(journal_path));
      std::string line;
      while (std::getline(journal, line)) {
        // A torn trailing line from a crash fails to parse and is skipped.
        const auto record = json::parse(line, nullptr, false);
        if (record.is_discarded() || !record.is_object() || !record.contains("uid")) {
          continue;
        }
        const auto uid = record.at("uid").get<std::string>();
        if (state_.completed_uids.contains(uid)) {
          recovered_[uid] = record;
        }
      }
    }
    // Committed uids whose journal record is gone are redone.
    std::erase_if(state_.completed_uids, [&](const std::string& uid) { return !recovered_.contains(uid); });
  } else {
    state_.content_hash = std::move(config_hash);
    state_.stage = stage;
    atomic_write_file(checkpoint_path, serialize_checkpoint(state_));
  }
  journal_.open(journal_path, std::ios::binary | std::ios::app);
  if (!journal_) {
    throw Error(Errc::io_error, "cannot open journal in " + dir_.string());
  }
  // Terminate any torn line so the next record starts cleanly.
  journal_ << '\n';
  journal_.flush();
}

auto CheckpointStore::completed() const -> std::set<std::string>
{
  std::lock_guard lock(mutex_);
  return state_.completed_uids;
}

void CheckpointStore::record(const std::string& uid, const json& result)
{
  std::lock_guard lock(mutex_);
  journal_ << result.dump() << '\n';
  journal_.flush();
  if (!journal_) {
    throw Error(Errc::io_error, "journal write failed in " + dir_.string());
  }
  pending_.insert(uid);
}

void CheckpointStore::commit()
{
  std::lock_guard lock(mutex_);
  if (pending_.empty()) {
    return;
  }
  state_.completed_uids.insert(pending_.begin(), pending_.end());
  pending_.clear();
  atomic_write_file(dir_ / "checkpoint", serialize_checkpoint(state_));
}

}  // namespace capforge
