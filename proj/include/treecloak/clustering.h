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

#ifndef TREECLOAK_CLUSTERING_H_
#define TREECLOAK_CLUSTERING_H_

#include <cstddef>
#include <string>

#include "treecloak/comparison.h"
#include "treecloak/dataset.h"
#include "treecloak/forest.h"

namespace treecloak::clustering {

inline constexpr double kDefaultIntensity = 0.2;

struct ClusterConfig {
  double intensity = kDefaultIntensity;  // t in [0, 1]
  double tolerance = 0.0;                // allowed accuracy drop
  int bitwidth = 16;                     // for the path and plan statistics

  void Validate() const;
};

struct ClusterReport {
  std::size_t node_count = 0;
  std::size_t distinct_before = 0;  // distinct (feature, threshold) pairs
  std::size_t distinct_after = 0;
  std::size_t node_clusters = 0;    // committed merges
  std::size_t aborted = 0;
  std::size_t passes = 0;
  std::size_t path_count = 0;
  std::size_t path_clusters = 0;
  std::size_t plan_before = 0;      // quantized plan sizes
  std::size_t plan_after = 0;
  double accuracy_before = 0.0;
  double accuracy_after = 0.0;

  std::string ToJson() const;
};

struct ClusterResult {
  forest::Model model;
  ClusterReport report;
};

// Merges same-feature thresholds whose normalized distance to a candidate is
// below the intensity into their occurrence-weighted mean, keeping a merge
// only when validation accuracy does not drop. Candidates are visited in
// (feature, threshold) order; a threshold value touched by a committed merge
// is left alone for the rest of that pass. Passes repeat until one commits
// nothing.
ClusterResult ClusterNodes(const forest::Model& model, const ClusterConfig& config,
                           const Dataset& validation);

// Paths keyed by their sorted (feature, threshold, direction) set.
forest::PathTable ClusterPaths(const forest::QuantizedForest& forest);

// The distinct (feature, threshold) pairs of a quantized forest.
comparison::NodePlan PlanFromClusters(const forest::QuantizedForest& forest);

}  // namespace treecloak::clustering

#endif  // TREECLOAK_CLUSTERING_H_
