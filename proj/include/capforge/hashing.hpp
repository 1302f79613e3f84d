#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace capforge {

/// 64-bit FNV-1a. This is the published hash behind every mock backend rule
/// and the config content hash, so its output must never change.
auto fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL) -> std::uint64_t;

/// SplitMix64 step: advances `state` and returns the next output.
auto splitmix64(std::uint64_t& state) -> std::uint64_t;

/// Lowercase, zero-padded 16-digit hex rendering.
auto hex64(std::uint64_t value) -> std::string;

auto base64_encode(std::string_view bytes) -> std::string;
/// Throws Error(parse_error) on characters outside the standard alphabet.
auto base64_decode(std::string_view text) -> std::string;

}  // namespace capforge
