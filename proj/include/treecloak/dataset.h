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

#ifndef TREECLOAK_DATASET_H_
#define TREECLOAK_DATASET_H_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace treecloak {

// Numeric table read from CSV. A column named "label" becomes the class
// label; every other column is a feature.
struct Dataset {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> labels;  // empty when the file has no label column

  bool has_labels() const { return !labels.empty(); }
  std::size_t size() const { return rows.size(); }

  // Reorders feature columns to `names`; throws kSchema on a missing column.
  Dataset Select(std::span<const std::string> names) const;
};

Dataset ParseCsv(std::string_view text);
Dataset LoadCsv(const std::string& path);
std::string FormatCsv(const Dataset& data);

// Reads a whole file; throws kIo.
std::string ReadFile(const std::string& path);
void WriteFile(const std::string& path, std::string_view contents);

}  // namespace treecloak

#endif  // TREECLOAK_DATASET_H_
