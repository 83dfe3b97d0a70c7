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

#ifndef TREECLOAK_TESTS_SUPPORT_BOOSTER_H_
#define TREECLOAK_TESTS_SUPPORT_BOOSTER_H_

#include <cstddef>

#include "treecloak/dataset.h"
#include "treecloak/forest.h"
#include "treecloak/random.h"

namespace treecloak::testing {

// Gaussian class blobs with label noise, split into train and validation.
struct Split {
  Dataset train;
  Dataset validation;
};
Split MakeBlobs(std::size_t classes, std::size_t features, std::size_t rows, Csprng& rng);

// Small second-order gradient booster with histogram split candidates, so
// trees reuse thresholds the way production boosters do.
struct BoostOptions {
  std::size_t rounds = 100;
  int max_depth = 3;
  double learning_rate = 0.3;
  double lambda = 1.0;
  std::size_t bins = 16;
};

forest::Model TrainBooster(const Dataset& train, std::size_t classes, const BoostOptions& options);

}  // namespace treecloak::testing

#endif  // TREECLOAK_TESTS_SUPPORT_BOOSTER_H_
