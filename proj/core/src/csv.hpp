#pragma once

#include <istream>
#include <string>
#include <vector>

namespace geoerasure::detail {

struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<CsvRow> rows;
  /// `# key: value` lines before the header.
  std::vector<std::pair<std::string, std::string>> directives;
};

/// Minimal RFC-4180 reader: comma separated, double-quote escaping, no
/// embedded newlines. Blank lines are skipped; `#` lines before the header
/// are directives or comments.
CsvTable read_csv(std::istream& in);

/// Quotes a field when it contains a comma, quote or leading/trailing space.
std::string csv_escape(const std::string& field);

/// Rounded to 12 significant digits, shortest round-trip form, no trailing ".0".
std::string csv_number(double value);

std::string trim(std::string s);

}  // namespace geoerasure::detail
