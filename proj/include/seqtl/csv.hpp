// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace seqtl {

/// Shortest decimal that parses back to the identical double.
std::string format_double(double v);

/// Strict double parse of a whole field; throws ArgumentError otherwise.
double parse_double(std::string_view field);

/// Comma-separated fields of one line (no quoting; fields never contain commas here).
std::vector<std::string> split_csv_line(std::string_view line);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(std::string_view name) const;  // -1 when absent
};

/// Parses text with a header line; every row must have the header's width.
CsvTable parse_csv(const std::string& text, const std::string& source_name);

}  // namespace seqtl
