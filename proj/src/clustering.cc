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

#include "treecloak/clustering.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

#include "json.hpp"
#include "treecloak/error.h"

namespace treecloak::clustering {
namespace {

std::set<std::pair<std::size_t, double>> DistinctPairs(const forest::Model& model) {
  std::set<std::pair<std::size_t, double>> pairs;
  for (const auto& t : model.trees) {
    for (const auto& n : t.nodes) pairs.emplace(n.feature, n.threshold);
  }
  return pairs;
}

}  // namespace

void ClusterConfig::Validate() const {
  if (!(intensity >= 0.0 && intensity <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "intensity must lie in [0, 1]");
  }
  if (!(tolerance >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "tolerance must be non-negative");
}

std::string ClusterReport::ToJson() const {
  nlohmann::ordered_json j = {{"node_count", node_count},
                              {"distinct_before", distinct_before},
                              {"distinct_after", distinct_after},
                              {"node_clusters", node_clusters},
                              {"aborted", aborted},
                              {"passes", passes},
                              {"path_count", path_count},
                              {"path_clusters", path_clusters},
                              {"plan_before", plan_before},
                              {"plan_after", plan_after},
                              {"accuracy_before", accuracy_before},
                              {"accuracy_after", accuracy_after}};
  return j.dump();
}

ClusterResult ClusterNodes(const forest::Model& model, const ClusterConfig& config,
                           const Dataset& validation) {
  config.Validate();
  model.Validate();
  if (validation.size() == 0) throw Error(ErrorCode::kInvalidArgument, "empty validation set");

  ClusterResult result{model, {}};
  auto& report = result.report;
  forest::Model& current = result.model;
  report.node_count = model.node_count();
  report.distinct_before = DistinctPairs(model).size();
  report.plan_before = PlanFromClusters(forest::Quantize(model, config.bitwidth)).size();
  report.accuracy_before = forest::Accuracy(model, validation);
  double accuracy = report.accuracy_before;

  for (bool changed = true; changed;) {
    changed = false;
    ++report.passes;
    std::set<std::pair<std::size_t, double>> claimed;
    for (const auto& [feature, value] : DistinctPairs(current)) {
      if (claimed.count({feature, value})) continue;
      const auto& range = current.features[feature];
      const double width = range.max - range.min;

      // Unclaimed values of this feature within the window, and the mean
      // over their node occurrences.
      std::set<double> members;
      double sum = 0.0;
      std::size_t occurrences = 0;
      for (const auto& t : current.trees) {
        for (const auto& n : t.nodes) {
          if (n.feature != feature || claimed.count({feature, n.threshold})) continue;
          if (std::abs(n.threshold - value) / width < config.intensity) {
            members.insert(n.threshold);
            sum += n.threshold;
            ++occurrences;
          }
        }
      }
      if (members.size() < 2) continue;
      const double mean = sum / static_cast<double>(occurrences);

      forest::Model trial = current;
      for (auto& t : trial.trees) {
        for (auto& n : t.nodes) {
          if (n.feature == feature && members.count(n.threshold)) n.threshold = mean;
        }
      }
      const double trial_accuracy = forest::Accuracy(trial, validation);
      if (trial_accuracy >= accuracy - config.tolerance &&
          trial_accuracy >= report.accuracy_before - config.tolerance) {
        current = std::move(trial);
        accuracy = trial_accuracy;
        for (double v : members) claimed.emplace(feature, v);
        claimed.emplace(feature, mean);
        ++report.node_clusters;
        changed = true;
      } else {
        ++report.aborted;
      }
    }
  }

  report.distinct_after = DistinctPairs(current).size();
  report.accuracy_after = accuracy;
  const auto quantized = forest::Quantize(current, config.bitwidth);
  report.plan_after = PlanFromClusters(quantized).size();
  const auto paths = ClusterPaths(quantized);
  report.path_count = paths.path_count();
  report.path_clusters = paths.cluster_count;
  return result;
}

forest::PathTable ClusterPaths(const forest::QuantizedForest& forest) {
  return forest::BuildPathTable(forest);
}

comparison::NodePlan PlanFromClusters(const forest::QuantizedForest& forest) {
  return comparison::NodePlan::Build(forest.NodeKeys(), forest.features.size());
}

}  // namespace treecloak::clustering
