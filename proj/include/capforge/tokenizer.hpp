#pragma once

#include <cstdint>
#include <memory>
#include <string_view>

namespace capforge {

/// Pre-flight token estimates. Exact counts come from backend usage fields;
/// these only price work before it is sent.
class TokenCounter {
 public:
  virtual ~TokenCounter() = default;
  [[nodiscard]] virtual auto count(std::string_view text) const -> std::int64_t = 0;
};

/// ceil(code points / 4).
class CharApproxTokenCounter final : public TokenCounter {
 public:
  [[nodiscard]] auto count(std::string_view text) const -> std::int64_t override;
};

/// Number of whitespace-delimited words.
class WhitespaceTokenCounter final : public TokenCounter {
 public:
  [[nodiscard]] auto count(std::string_view text) const -> std::int64_t override;
};

auto utf8_codepoints(std::string_view text) -> std::int64_t;
auto count_words(std::string_view text) -> std::int64_t;

/// The default counter (CharApproxTokenCounter).
auto count_tokens(std::string_view text) -> std::int64_t;

}  // namespace capforge
