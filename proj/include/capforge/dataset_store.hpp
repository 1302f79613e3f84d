#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "capforge/record_codec.hpp"

namespace capforge {

inline constexpr std::string_view kManifestFormat = "capforge-manifest";
inline constexpr int kManifestVersion = 1;

struct ManifestHeader {
  int format_version = kManifestVersion;
  std::string config_hash;
};

struct ManifestFile {
  ManifestHeader header;
  std::vector<ManifestEntry> entries;
};

/// Writes `contents` to a sibling temp file, flushes it and renames it over
/// `path`. A crash at any point leaves either the old or the new file.
void atomic_write_file(const std::filesystem::path& path, std::string_view contents);

auto read_file(const std::filesystem::path& path) -> std::string;

/// Serialized manifest bytes: header line, then entries sorted by uid.
/// Throws Error(duplicate_uid).
auto serialize_manifest(const ManifestHeader& header, std::vector<ManifestEntry> entries) -> std::string;

void write_manifest(const std::filesystem::path& path, const ManifestHeader& header,
                    std::vector<ManifestEntry> entries);

/// Throws Error(version_mismatch) for another format version and
/// Error(parse_error) for malformed, unsorted or duplicate bodies.
auto read_manifest(const std::filesystem::path& path) -> ManifestFile;
auto parse_manifest(std::string_view text) -> ManifestFile;

/// Raw asset listing for ingestion: one asset JSON object per line, no
/// header, any order.
auto read_asset_lines(const std::filesystem::path& path) -> std::vector<AssetRecord>;

enum class ExportFormat { map, csv };

struct CaptionExport {
  std::string contents;
  std::vector<std::string> missing_captions;
};

/// uid -> caption, ordered by uid. Entries without a final caption are
/// listed in `missing_captions` and left out.
auto export_captions(const std::vector<ManifestEntry>& entries, ExportFormat format) -> CaptionExport;

struct CaptionLengthStats {
  std::map<std::int64_t, std::int64_t> histogram;
  double mean = 0.0;
  double median = 0.0;
  std::int64_t count = 0;

  /// Frequencies for word counts 0..max.
  [[nodiscard]] auto dense_bins() const -> std::vector<std::int64_t>;
  [[nodiscard]] auto render() const -> std::string;
};

auto caption_length_stats(const std::vector<std::string>& captions) -> CaptionLengthStats;

}  // namespace capforge
