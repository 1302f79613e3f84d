#include "capforge/tokenizer.hpp"

#include <cctype>

namespace capforge {

auto utf8_codepoints(std::string_view text) -> std::int64_t
{
  std::int64_t n = 0;
  for (const char c : text) {
    // count every byte that is not a continuation byte
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) {
      ++n;
    }
  }
  return n;
}

auto count_words(std::string_view text) -> std::int64_t
{
  std::int64_t n = 0;
  bool in_word = false;
  for (const char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) {
      ++n;
    }
    in_word = !space;
  }
  return n;
}

auto CharApproxTokenCounter::count(std::string_view text) const -> std::int64_t
{
  return (utf8_codepoints(text) + 3) / 4;
}

auto WhitespaceTokenCounter::count(std::string_view text) const -> std::int64_t
{
  return count_words(text);
}

auto count_tokens(std::string_view text) -> std::int64_t
{
  return CharApproxTokenCounter{}.count(text);
}

}  // namespace capforge
