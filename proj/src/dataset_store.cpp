#include "capforge/dataset_store.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <system_error>

#include <fcntl.h>
#include <unistd.h>

#include <fmt/format.h>

#include "capforge/csv.hpp"
#include "capforge/errors.hpp"
#include "capforge/tokenizer.hpp"

namespace capforge {

namespace fs = std::filesystem;
using nlohmann::json;

void atomic_write_file(const fs::path& path, std::string_view contents)
{
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  const fs::path tmp = path.string() + fmt::format(".tmp-{}", ::getpid());
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) {
    throw Error(Errc::io_error, "cannot open " + tmp.string());
  }
  std::size_t written = 0;
  while (written < contents.size()) {
    const auto n = ::write(fd, contents.data() + written, contents.size() - written);
    if (n < 0) {
      ::close(fd);
      fs::remove(tmp);
      throw Error(Errc::io_error, "write failed for " + tmp.string());
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0 || ::close(fd) != 0) {
    fs::remove(tmp);
    throw Error(Errc::io_error, "sync failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error(Errc::io_error, fmt::format("rename {} -> {}: {}", tmp.string(), path.string(), ec.message()));
  }
}

auto read_file(const fs::path& path) -> std::string
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(Errc::io_error, "cannot read " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

auto serialize_manifest(const ManifestHeader& header, std::vector<ManifestEntry> entries) -> std::string
{
  std::sort(entries.begin(), entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.asset.uid < b.asset.uid; });
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (entries[i].asset.uid == entries[i - 1].asset.uid) {
      throw Error(Errc::duplicate_uid, entries[i].asset.uid);
    }
  }
  nlohmann::ordered_json head;
  head["format"] = kManifestFormat;
  head["format_version"] = header.format_version;
  head["config_hash"] = header.config_hash;
  std::string out = head.dump() + "\n";
  for (const auto& e : entries) {
    out += entry_to_json(e).dump();
    out += '\n';
  }
  return out;
}

void write_manifest(const fs::path& path, const ManifestHeader& header, std::vector<ManifestEntry> entries)
{
  atomic_write_file(path, serialize_manifest(header, std::move(entries)));
}

auto parse_manifest(std::string_view text) -> ManifestFile
{
  ManifestFile file;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(Errc::parse_error, "manifest is empty");
  }
  try {
    const auto head = json::parse(line);
    if (head.value("format", std::string{}) != kManifestFormat) {
      throw Error(Errc::parse_error, "not a capforge manifest");
    }
    file.header.format_version = head.at("format_version").get<int>();
    file.header.config_hash = head.value("config_hash", std::string{});
  } catch (const json::exception& e) {
    throw Error(Errc::parse_error, std::string("manifest header: ") + e.what());
  }
  if (file.header.format_version != kManifestVersion) {
    throw Error(Errc::version_mismatch,
                fmt::format("manifest version {} (expected {})", file.header.format_version, kManifestVersion));
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(Errc::parse_error, fmt::format("manifest line {}: {}", line_no, e.what()));
    }
    auto entry = entry_from_json(j);
    if (!file.entries.empty()) {
      const auto& prev = file.entries.back().asset.uid;
      if (entry.asset.uid == prev) {
        throw Error(Errc::duplicate_uid, entry.asset.uid);
      }
      if (entry.asset.uid < prev) {
        throw Error(Errc::parse_error, fmt::format("manifest line {}: body not sorted by uid", line_no));
      }
    }
    file.entries.push_back(std::move(entry));
  }
  return file;
}

auto read_manifest(const fs::path& path) -> ManifestFile
{
  return parse_manifest(read_file(path));
}

auto read_asset_lines(const fs::path& path) -> std::vector<AssetRecord>
{
  std::istringstream in(read_file(path));
  std::vector<AssetRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    try {
      out.push_back(asset_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(Errc::parse_error, fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
  return out;
}

auto export_captions(const std::vector<ManifestEntry>& entries, ExportFormat format) -> CaptionExport
{
  std::vector<const ManifestEntry*> sorted;
  sorted.reserve(entries.size());
  for (const auto& e : entries) {
    sorted.push_back(&e);
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const ManifestEntry* a, const ManifestEntry* b) { return a->asset.uid < b->asset.uid; });

  CaptionExport out;
  if (format == ExportFormat::csv) {
    out.contents = csv::format_row({"uid", "caption"});
  }
  nlohmann::ordered_json map = nlohmann::ordered_json::object();
  for (const auto* e : sorted) {
    if (!e->final_caption) {
      out.missing_captions.push_back(e->asset.uid);
      continue;
    }
    if (format == ExportFormat::csv) {
      out.contents += csv::format_row({e->asset.uid, e->final_caption->text});
    } else {
      map[e->asset.uid] = e->final_caption->text;
    }
  }
  if (format == ExportFormat::map) {
    out.contents = map.dump(2) + "\n";
  }
  return out;
}

auto CaptionLengthStats::dense_bins() const -> std::vector<std::int64_t>
{
  if (histogram.empty()) {
    return {};
  }
  std::vector<std::int64_t> bins(static_cast<std::size_t>(histogram.rbegin()->first + 1), 0);
  for (const auto& [words, freq] : histogram) {
    bins[static_cast<std::size_t>(words)] = freq;
  }
  return bins;
}

auto CaptionLengthStats::render() const -> std::string
{
  std::string out = fmt::format("captions: {}  mean words: {:.2f}  median words: {:.1f}\n", count, mean, median);
  for (const auto& [words, freq] : histogram) {
    out += fmt::format("{:>5} {:>10}\n", words, freq);
  }
  return out;
}

auto caption_length_stats(const std::vector<std::string>& captions) -> CaptionLengthStats
{
  CaptionLengthStats stats;
  if (captions.empty()) {
    return stats;
  }
  std::vector<std::int64_t> lengths;
  lengths.reserve(captions.size());
  for (const auto& c : captions) {
    lengths.push_back(count_words(c));
    ++stats.histogram[lengths.back()];
  }
  std::sort(lengths.begin(), lengths.end());
  stats.count = static_cast<std::int64_t>(lengths.size());
  double sum = 0.0;
  for (const auto l : lengths) {
    sum += static_cast<double>(l);
  }
  stats.mean = sum / static_cast<double>(lengths.size());
  const auto mid = lengths.size() / 2;
  stats.median = lengths.size() % 2 == 1 ? static_cast<double>(lengths[mid])
                                         : 0.5 * static_cast<double>(lengths[mid - 1] + lengths[mid]);
  return stats;
}

}  // namespace capforge
