#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "capforge/transport.hpp"

namespace capforge {

/// Deterministic stand-in for all three model services, speaking the same
/// JSON protocol as a real server. Every response is a pure function of the
/// request bytes and (seed, dim).
///
/// Published rules (a reference server must reproduce them bit-exactly):
///   key(f1..fk)   = fnv1a64(decimal(seed) + "\x1f" + f1 + ... + "\x1f" + fk)
///   image bytes   = base64-decoded `image_b64`, else the `image_uri` string
///   /v1/caption   sample i: h = key("caption", image bytes, prompt, decimal(i));
///                 words color[h%8], material[(h>>8)%8], noun[(h>>16)%16],
///                 detail[(h>>24)%8]; "a c m n d" without a prompt, "c m n d"
///                 with one.
///   /v1/embed     state = key("embed", kind, payload bytes); component j is
///                 2*(splitmix64(state)>>11)*2^-53 - 1; vector scaled to unit
///                 norm. Image payloads are base64 and hashed decoded.
///   /v1/summarize text = prompt text after its first '\'' up to the next ", "
///                 or '\'' (the whole trimmed prompt if there is no quote);
///                 usage counts are ceil(code points / 4) of prompt and text.
/// Responses are compact JSON with keys in lexicographic order.
class MockBackend {
 public:
  MockBackend(std::uint64_t seed, int dim);

  [[nodiscard]] auto handle(std::string_view path, const std::string& body) const -> HttpResponse;

  [[nodiscard]] auto seed() const noexcept -> std::uint64_t { return seed_; }
  [[nodiscard]] auto dim() const noexcept -> int { return dim_; }

 private:
  [[nodiscard]] auto caption(const std::string& body) const -> HttpResponse;
  [[nodiscard]] auto embed(const std::string& body) const -> HttpResponse;
  [[nodiscard]] auto summarize(const std::string& body) const -> HttpResponse;

  std::uint64_t seed_;
  int dim_;
};

/// In-process transport routing requests to a MockBackend.
class MockTransport final : public Transport {
 public:
  explicit MockTransport(MockBackend backend) : backend_(backend) {}
  auto post(std::string_view path, const std::string& body) -> HttpResponse override
  {
    return backend_.handle(path, body);
  }

 private:
  MockBackend backend_;
};

/// The summarize mock's extraction rule, exposed for tests.
auto mock_extract_first_caption(std::string_view prompt) -> std::string;

}  // namespace capforge
