#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace capforge::csv {

using Row = std::vector<std::string>;

/// RFC 4180 field quoting: fields containing ',', '"', CR or LF are wrapped
/// in double quotes with embedded quotes doubled.
auto escape_field(std::string_view field) -> std::string;
auto format_row(const Row& row) -> std::string;

/// Parses RFC 4180 text (LF or CRLF record separators, quoted fields may
/// span lines). Throws Error(parse_error) on an unterminated quote.
auto parse(std::string_view text) -> std::vector<Row>;

}  // namespace capforge::csv
