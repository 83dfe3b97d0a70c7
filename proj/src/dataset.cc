/*
 * Copyright 2026 The treecloak Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "treecloak/dataset.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "treecloak/error.h"

namespace treecloak {
namespace {

std::string_view Trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> SplitCommas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    out.push_back(Trim(line.substr(pos, comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

double ParseNumber(std::string_view cell, std::size_t line_no) {
  double v = 0;
  const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || end != cell.data() + cell.size() || !std::isfinite(v)) {
    throw Error(ErrorCode::kSchema, "line " + std::to_string(line_no) + ": bad number '" +
                                        std::string(cell) + "'");
  }
  return v;
}

}  // namespace

Dataset ParseCsv(std::string_view text) {
  Dataset data;
  std::optional<std::size_t> label_col;
  std::size_t width = 0;
  std::size_t line_no = 0;
  bool header = true;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    const std::string_view line = Trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty()) continue;
    const auto cells = SplitCommas(line);
    if (header) {
      width = cells.size();
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i] == "label") {
          label_col = i;
        } else {
          data.columns.emplace_back(cells[i]);
        }
      }
      header = false;
      continue;
    }
    if (cells.size() != width) {
      throw Error(ErrorCode::kSchema, "line " + std::to_string(line_no) + ": expected " +
                                          std::to_string(width) + " cells");
    }
    std::vector<double> row;
    row.reserve(data.columns.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const double v = ParseNumber(cells[i], line_no);
      if (label_col && i == *label_col) {
        if (v < 0 || v != std::floor(v)) {
          throw Error(ErrorCode::kSchema, "line " + std::to_string(line_no) + ": bad label");
        }
        data.labels.push_back(static_cast<std::size_t>(v));
      } else {
        row.push_back(v);
      }
    }
    data.rows.push_back(std::move(row));
  }
  if (header) throw Error(ErrorCode::kSchema, "CSV has no header");
  return data;
}

Dataset Dataset::Select(std::span<const std::string> names) const {
  std::vector<std::size_t> index;
  for (const auto& name : names) {
    std::size_t i = 0;
    while (i < columns.size() && columns[i] != name) ++i;
    if (i == columns.size()) throw Error(ErrorCode::kSchema, "missing column '" + name + "'");
    index.push_back(i);
  }
  Dataset out;
  out.columns.assign(names.begin(), names.end());
  out.labels = labels;
  for (const auto& row : rows) {
    std::vector<double> r;
    for (auto i : index) r.push_back(row[i]);
    out.rows.push_back(std::move(r));
  }
  return out;
}

std::string FormatCsv(const Dataset& data) {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t i = 0; i < data.columns.size(); ++i) out << (i ? "," : "") << data.columns[i];
  if (data.has_labels()) out << (data.columns.empty() ? "" : ",") << "label";
  out << '\n';
  for (std::size_t r = 0; r < data.rows.size(); ++r) {
    for (std::size_t i = 0; i < data.rows[r].size(); ++i) out << (i ? "," : "") << data.rows[r][i];
    if (data.has_labels()) out << (data.rows[r].empty() ? "" : ",") << data.labels[r];
    out << '\n';
  }
  return out.str();
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void WriteFile(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path);
}

Dataset LoadCsv(const std::string& path) { return ParseCsv(ReadFile(path)); }

}  // namespace treecloak
