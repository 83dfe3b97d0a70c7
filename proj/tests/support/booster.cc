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

#include "support/booster.h"

#include <algorithm>
#include <cmath>
#include <random>

namespace treecloak::testing {

Split MakeBlobs(std::size_t classes, std::size_t features, std::size_t rows, Csprng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> centers(classes, std::vector<double>(features));
  for (auto& c : centers) {
    for (auto& v : c) v = 3.0 * normal(rng);
  }
  Split split;
  for (std::size_t f = 0; f < features; ++f) split.train.columns.push_back("x" + std::to_string(f));
  split.validation.columns = split.train.columns;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t label = rng.Uniform(classes);
    std::vector<double> row;
    for (std::size_t f = 0; f < features; ++f) row.push_back(centers[label][f] + 2.0 * normal(rng));
    // One row in ten gets a random label.
    const std::size_t noisy = rng.Uniform(10) == 0 ? rng.Uniform(classes) : label;
    Dataset& target = r % 4 == 3 ? split.validation : split.train;
    target.rows.push_back(std::move(row));
    target.labels.push_back(noisy);
  }
  return split;
}

namespace {

struct Stats {
  double g = 0.0;
  double h = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& data, const std::vector<std::vector<double>>& cuts,
              const std::vector<double>& grad, const std::vector<double>& hess,
              const BoostOptions& options)
      : data_(data), cuts_(cuts), grad_(grad), hess_(hess), options_(options) {}

  forest::Tree Build() {
    std::vector<std::size_t> rows(data_.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    tree_ = {};
    Grow(rows, 0);
    return std::move(tree_);
  }

 private:
  double Score(const Stats& s) const { return s.g * s.g / (s.h + options_.lambda); }

  std::int32_t Leaf(const Stats& s) {
    tree_.leaves.push_back({-options_.learning_rate * s.g / (s.h + options_.lambda), std::nullopt});
    return forest::LeafRef(tree_.leaves.size() - 1);
  }

  std::int32_t Grow(const std::vector<std::size_t>& rows, int depth) {
    Stats total;
    for (auto r : rows) {
      total.g += grad_[r];
      total.h += hess_[r];
    }
    if (depth >= options_.max_depth || rows.size() < 4) return Leaf(total);

    double best_gain = 1e-9;
    std::size_t best_feature = 0;
    double best_cut = 0.0;
    for (std::size_t f = 0; f < cuts_.size(); ++f) {
      for (double cut : cuts_[f]) {
        Stats left;
        for (auto r : rows) {
          if (!(data_.rows[r][f] > cut)) {
            left.g += grad_[r];
            left.h += hess_[r];
          }
        }
        const Stats right{total.g - left.g, total.h - left.h};
        if (left.h < 1e-3 || right.h < 1e-3) continue;
        const double gain = Score(left) + Score(right) - Score(total);
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = f;
          best_cut = cut;
        }
      }
    }
    if (best_gain <= 1e-9) return Leaf(total);

    std::vector<std::size_t> left, right;
    for (auto r : rows) (data_.rows[r][best_feature] > best_cut ? right : left).push_back(r);
    const auto index = static_cast<std::int32_t>(tree_.nodes.size());
    tree_.nodes.push_back({best_feature, best_cut, 0, 0});
    const auto l = Grow(left, depth + 1);
    const auto r = Grow(right, depth + 1);
    tree_.nodes[index].left = l;
    tree_.nodes[index].right = r;
    return index;
  }

  const Dataset& data_;
  const std::vector<std::vector<double>>& cuts_;
  const std::vector<double>& grad_;
  const std::vector<double>& hess_;
  const BoostOptions& options_;
  forest::Tree tree_;
};

}  // namespace

forest::Model TrainBooster(const Dataset& train, std::size_t classes, const BoostOptions& options) {
  const std::size_t features = train.columns.size();
  forest::Model model;
  model.kind = forest::ModelKind::kXgboost;
  model.num_classes = classes;
  std::vector<std::vector<double>> cuts(features);
  for (std::size_t f = 0; f < features; ++f) {
    std::vector<double> values;
    for (const auto& row : train.rows) values.push_back(row[f]);
    std::sort(values.begin(), values.end());
    const double pad = 0.05 * (values.back() - values.front()) + 1e-6;
    model.features.push_back({train.columns[f], values.front() - pad, values.back() + pad});
    for (std::size_t b = 1; b < options.bins; ++b) {
      cuts[f].push_back(values[b * values.size() / options.bins]);
    }
    cuts[f].erase(std::unique(cuts[f].begin(), cuts[f].end()), cuts[f].end());
  }

  const std::size_t outputs = model.output_count();
  std::vector<std::vector<double>> margin(train.size(), std::vector<double>(outputs, 0.0));
  std::vector<double> grad(train.size()), hess(train.size());
  for (std::size_t round = 0; round < options.rounds; ++round) {
    for (std::size_t k = 0; k < outputs; ++k) {
      for (std::size_t i = 0; i < train.size(); ++i) {
        double p;
        if (outputs == 1) {
          p = 1.0 / (1.0 + std::exp(-margin[i][0]));
        } else {
          const double top = *std::max_element(margin[i].begin(), margin[i].end());
          double z = 0.0;
          for (double m : margin[i]) z += std::exp(m - top);
          p = std::exp(margin[i][k] - top) / z;
        }
        const double y = outputs == 1 ? static_cast<double>(train.labels[i] == 1)
                                      : static_cast<double>(train.labels[i] == k);
        grad[i] = p - y;
        hess[i] = std::max(p * (1.0 - p), 1e-6);
      }
      forest::Tree tree = TreeBuilder(train, cuts, grad, hess, options).Build();
      if (outputs > 1) tree.class_id = k;
      for (std::size_t i = 0; i < train.size(); ++i) {
        margin[i][k] += tree.leaves[forest::TraverseLeaf(tree, train.rows[i])].score;
      }
      model.trees.push_back(std::move(tree));
    }
  }
  model.Validate();
  return model;
}

}  // namespace treecloak::testing
