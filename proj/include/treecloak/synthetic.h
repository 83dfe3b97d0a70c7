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

#ifndef TREECLOAK_SYNTHETIC_H_
#define TREECLOAK_SYNTHETIC_H_

#include <cstddef>

#include "treecloak/dataset.h"
#include "treecloak/forest.h"

namespace treecloak {
class Csprng;
}

namespace treecloak::synthetic {

// Shape of a generated forest. Thresholds are drawn from a per-feature pool
// of `thresholds_per_feature` values so repeated splits occur naturally;
// zero means every threshold is fresh.
struct ForestSpec {
  forest::ModelKind kind = forest::ModelKind::kXgboost;
  std::size_t num_classes = 2;
  std::size_t features = 4;
  std::size_t trees = 10;
  int max_depth = 4;
  double split_probability = 0.8;
  std::size_t thresholds_per_feature = 0;
};

forest::Model RandomModel(const ForestSpec& spec, Csprng& rng);

// Rows drawn uniformly from the model's feature ranges, labelled with the
// model's own plaintext prediction.
Dataset RandomRows(const forest::Model& model, std::size_t count, Csprng& rng);

}  // namespace treecloak::synthetic

#endif  // TREECLOAK_SYNTHETIC_H_
