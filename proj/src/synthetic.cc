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

#include "treecloak/synthetic.h"

#include "treecloak/random.h"

namespace treecloak::synthetic {
namespace {

double UniformReal(Csprng& rng, double lo, double hi) {
  const double u = static_cast<double>(rng.NextU64() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

}  // namespace

forest::Model RandomModel(const ForestSpec& spec, Csprng& rng) {
  forest::Model model;
  model.kind = spec.kind;
  model.num_classes = spec.num_classes;
  for (std::size_t f = 0; f < spec.features; ++f) {
    const double lo = UniformReal(rng, -100.0, 100.0);
    model.features.push_back({"f" + std::to_string(f), lo, lo + UniformReal(rng, 1.0, 200.0)});
  }
  std::vector<std::vector<double>> pool(spec.features);
  for (std::size_t f = 0; f < spec.features; ++f) {
    for (std::size_t i = 0; i < spec.thresholds_per_feature; ++i) {
      pool[f].push_back(UniformReal(rng, model.features[f].min, model.features[f].max));
    }
  }

  for (std::size_t t = 0; t < spec.trees; ++t) {
    forest::Tree tree;
    if (spec.kind == forest::ModelKind::kAdaboost) {
      tree.weight = UniformReal(rng, 0.1, 2.0);
    } else if (spec.num_classes > 2) {
      tree.class_id = t % spec.num_classes;
    }
    auto make_leaf = [&]() {
      forest::Leaf leaf;
      if (spec.kind == forest::ModelKind::kAdaboost) {
        leaf.class_id = rng.Uniform(spec.num_classes);
        leaf.score = leaf.class_id == std::size_t{1} || spec.num_classes > 2 ? *tree.weight : -*tree.weight;
      } else {
        leaf.score = UniformReal(rng, -1.0, 1.0);
      }
      tree.leaves.push_back(leaf);
      return forest::LeafRef(tree.leaves.size() - 1);
    };
    auto grow = [&](auto& self, int depth) -> std::int32_t {
      const bool split = depth < spec.max_depth &&
                         (depth == 0 || UniformReal(rng, 0.0, 1.0) < spec.split_probability);
      if (!split) return make_leaf();
      const auto index = static_cast<std::int32_t>(tree.nodes.size());
      forest::Node node;
      node.feature = rng.Uniform(spec.features);
      const auto& range = model.features[node.feature];
      node.threshold = pool[node.feature].empty()
                           ? UniformReal(rng, range.min, range.max)
                           : pool[node.feature][rng.Uniform(pool[node.feature].size())];
      tree.nodes.push_back(node);
      const auto left = self(self, depth + 1);
      const auto right = self(self, depth + 1);
      tree.nodes[index].left = left;
      tree.nodes[index].right = right;
      return index;
    };
    grow(grow, 0);
    model.trees.push_back(std::move(tree));
  }
  model.Validate();
  return model;
}

Dataset RandomRows(const forest::Model& model, std::size_t count, Csprng& rng) {
  Dataset data;
  data.columns = model.feature_names();
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> row;
    for (const auto& f : model.features) row.push_back(UniformReal(rng, f.min, f.max));
    data.labels.push_back(forest::PredictClass(forest::RawScores(model, row)));
    data.rows.push_back(std::move(row));
  }
  return data;
}

}  // namespace treecloak::synthetic
