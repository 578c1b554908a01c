#pragma once

#include "rcn/common.hpp"

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace rcn::textio {

/// Shortest-safe decimal form with 17 significant digits; round-trips any
/// finite double exactly.
std::string format_double(double v);

double parse_double(std::string_view s);
long long parse_int(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);
std::string trim(std::string_view s);

/// Writes `m` row by row, values separated by single spaces.
void write_matrix(std::ostream& os, const Matrix& m);
Matrix read_matrix(std::istream& is, Index rows, Index cols);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace rcn::textio
