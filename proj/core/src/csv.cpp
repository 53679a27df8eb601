#include "csv.hpp"

#include <nlohmann/json.hpp>

#include "geoerasure/error.hpp"
#include "geoerasure/report.hpp"

namespace geoerasure::detail {

std::string csv_number(double value) {
  auto text = nlohmann::json(stable_round(value)).dump();
  if (text.size() > 2 && text.compare(text.size() - 2, 2, ".0") == 0) text.resize(text.size() - 2);
  return text;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

namespace {

std::vector<std::string> split_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      fields.push_back(was_quoted ? field : trim(field));
      field.clear();
      was_quoted = false;
    } else {
      field.push_back(c);
    }
  }
  if (quoted) throw SchemaError("line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(was_quoted ? field : trim(field));
  return fields;
}

}  // namespace

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    if (trim(line).empty()) continue;
    if (!have_header && line.front() == '#') {
      const auto body = trim(line.substr(1));
      const auto colon = body.find(':');
      if (colon != std::string::npos) {
        table.directives.emplace_back(trim(body.substr(0, colon)), trim(body.substr(colon + 1)));
      }
      continue;
    }
    auto fields = split_line(line, line_no);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
    } else {
      table.rows.push_back({line_no, std::move(fields)});
    }
  }
  if (!have_header) throw SchemaError("missing header row");
  return table;
}

std::string csv_escape(const std::string& field) {
  const bool needs_quotes = field.find_first_of(",\"") != std::string::npos ||
                            (!field.empty() && (field.front() == ' ' || field.back() == ' '));
  if (!needs_quotes) return field;
  std::string out = "\"";
  for (const char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace geoerasure::detail
