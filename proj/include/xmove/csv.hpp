#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace xmove::csv {

// Minimal reader for the comma-separated exports this project consumes:
// no quoting, '.' decimal point, first row is the header.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;  // 1-based source line of each row

    // Index of a header column, or npos.
    std::size_t column(std::string_view name) const;
};

Table read(std::istream& in);
Table read_file(const std::string& path);

std::vector<std::string> split(std::string_view line, char sep = ',');

// Strict numeric parse; throws ParseError carrying `line`.
double parse_double(std::string_view text, std::size_t line);

// Shortest text that parses back to the same double.
std::string format_double(double value);

}  // namespace xmove::csv
