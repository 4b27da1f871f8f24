#pragma once

// Minimal CSV helpers shared by the manifest, index and feature tables.
// Fields may be double-quoted; quotes inside a quoted field are doubled.

#include <string>
#include <string_view>
#include <vector>

namespace fundus::pipeline::csv {

std::vector<std::string> split_line(std::string_view line);
/// Splits on '\n', strips a trailing '\r', drops blank lines. Line numbers are 1-based.
std::vector<std::pair<int, std::string>> lines(std::string_view text);
std::string quote(std::string_view field);
std::string format_double(double v);
std::string read_file(const std::string& path);

}  // namespace fundus::pipeline::csv
