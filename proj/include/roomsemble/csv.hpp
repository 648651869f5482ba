#pragma once

#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace roomsemble::csv {

using Row = std::vector<std::string>;

/// Reads one RFC 4180 record (quoted fields may contain commas, quotes and
/// newlines). Returns nullopt at end of input. A trailing '\r' is dropped.
inline std::optional<Row> read_row(std::istream& in) {
  if (in.peek() == std::char_traits<char>::eof()) return std::nullopt;
  Row row;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  char c = 0;
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && field.empty() && !was_quoted) {
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      was_quoted = false;
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  row.push_back(std::move(field));
  return row;
}

inline bool is_blank(const Row& row) {
  return row.size() == 1 && row[0].find_first_not_of(" \t") == std::string::npos;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string escape(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace roomsemble::csv
