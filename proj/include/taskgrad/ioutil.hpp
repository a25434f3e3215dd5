#pragma once

#include <string>
#include <vector>

namespace taskgrad {

/// Shortest decimal form that round-trips a double exactly.
std::string fmt_double(double v);

/// Splits one CSV line on commas. No quoting; the panel and matrix formats
/// never embed commas in cells.
std::vector<std::string> split_csv_line(const std::string& line);

/// Strict double parse of a whole cell; returns false on trailing garbage or
/// non-finite results.
bool parse_double(const std::string& cell, double* out);

}  // namespace taskgrad
