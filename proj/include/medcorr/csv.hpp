// Copyright 2026 The medcorr Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// RFC 4180 delimited-table reading and writing. Fields may be quoted;
// quoted fields may contain commas, doubled quotes and line breaks.

#include <string>
#include <string_view>
#include <vector>

#include "medcorr/error.hpp"

namespace medcorr::csv {

using Row = std::vector<std::string>;

struct Table {
  Row header;
  std::vector<Row> rows;
  std::vector<std::size_t> row_lines;  // 1-based line where each row starts
};

inline std::vector<Row> parse_rows(std::string_view data,
                                   std::vector<std::size_t>* start_lines = nullptr) {
  std::vector<Row> rows;
  Row row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  std::size_t row_line = 1;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    if (start_lines != nullptr) start_lines->push_back(row_line);
    row.clear();
  };
  for (std::size_t i = 0; i < data.size(); ++i) {
    const char c = data[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < data.size() && data[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started || !field.empty()) {
          throw ValidationError("csv line " + std::to_string(line) +
                                ": stray quote inside unquoted field");
        }
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < data.size() && data[i + 1] == '\n') break;
        field.push_back(c);
        break;
      case '\n':
        end_row();
        ++line;
        row_line = line;
        break;
      default:
        field.push_back(c);
    }
  }
  if (in_quotes) {
    throw ValidationError("csv line " + std::to_string(row_line) +
                          ": unterminated quoted field");
  }
  if (field_started || !field.empty() || !row.empty()) end_row();
  return rows;
}

inline Table parse_table(std::string_view data) {
  Table t;
  std::vector<std::size_t> lines;
  auto rows = parse_rows(data, &lines);
  if (rows.empty()) throw ValidationError("csv: missing header row");
  t.header = std::move(rows.front());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    // a lone empty field is a blank line
    if (rows[i].size() == 1 && rows[i][0].empty()) continue;
    t.rows.push_back(std::move(rows[i]));
    t.row_lines.push_back(lines[i]);
  }
  return t;
}

inline std::string quote(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) {
    return std::string(field);
  }
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void append_row(std::string& out, const Row& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i > 0) out.push_back(',');
    out += quote(row[i]);
  }
  out.push_back('\n');
}

}  // namespace medcorr::csv
