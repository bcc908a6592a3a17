#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace synth {

// RFC 4180 style rows: comma separated, double-quoted fields may hold commas,
// newlines and doubled quotes. A trailing newline does not add a row. Throws
// ParseError on an unterminated quote.
std::vector<std::vector<std::string>> parse_csv(std::string_view content);

// Column index by header name; throws ParseError when absent.
std::size_t csv_column(const std::vector<std::string>& header, std::string_view name);

}  // namespace synth
