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

#ifndef TREECLOAK_FOREST_H_
#define TREECLOAK_FOREST_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "treecloak/comparison.h"
#include "treecloak/dataset.h"
#include "treecloak/fhe.h"

namespace treecloak {
class Csprng;
}

namespace treecloak::forest {

enum class ModelKind { kXgboost, kAdaboost };

std::string_view ModelKindName(ModelKind kind);

struct FeatureRange {
  std::string name;
  double min = 0.0;
  double max = 0.0;
  bool operator==(const FeatureRange&) const = default;
};

// Child references: i >= 0 is node i, -(k + 1) is leaf k.
inline constexpr std::int32_t LeafRef(std::size_t leaf) {
  return -static_cast<std::int32_t>(leaf) - 1;
}
inline constexpr bool IsLeafRef(std::int32_t ref) { return ref < 0; }
inline constexpr std::size_t LeafIndex(std::int32_t ref) {
  return static_cast<std::size_t>(-(ref + 1));
}

struct Node {
  std::size_t feature = 0;
  double threshold = 0.0;
  std::int32_t left = 0;
  std::int32_t right = 0;
  bool operator==(const Node&) const = default;
};

struct Leaf {
  double score = 0.0;
  std::optional<std::size_t> class_id;
  bool operator==(const Leaf&) const = default;
};

// Node predicate: feature > threshold goes right.
struct Tree {
  std::optional<std::size_t> class_id;
  std::optional<double> weight;
  std::vector<Node> nodes;
  std::vector<Leaf> leaves;

  // Node 0, or leaf 0 for a tree without splits.
  std::int32_t root() const { return nodes.empty() ? LeafRef(0) : 0; }
  bool operator==(const Tree&) const = default;
};

// A forest as exported by the training toolkit, thresholds still real-valued.
struct Model {
  ModelKind kind = ModelKind::kXgboost;
  std::size_t num_classes = 2;
  std::vector<FeatureRange> features;
  std::vector<Tree> trees;

  // Binary models aggregate into a single signed score.
  std::size_t output_count() const { return num_classes > 2 ? num_classes : 1; }
  std::size_t node_count() const;
  std::size_t leaf_count() const;
  std::vector<std::string> feature_names() const;

  // Throws kSchema on structural problems.
  void Validate() const;

  bool operator==(const Model&) const = default;
};

Model ParseModel(std::string_view json);
std::string SerializeModel(const Model& model);

// Which output a leaf adds to and with what real-valued amount. AdaBoost
// leaves carry +w for class 1 and -w for class 0 in binary mode, and +w for
// their own class otherwise.
struct LeafContribution {
  std::size_t output = 0;
  double value = 0.0;
};
LeafContribution Contribution(const Model& model, const Tree& tree, const Leaf& leaf);

// Plaintext inference on real-valued features in model order.
std::size_t TraverseLeaf(const Tree& tree, std::span<const double> row);
std::vector<double> RawScores(const Model& model, std::span<const double> row);
// Argmax with lowest-index tie-break, or the sign for a single output
// (positive means class 1).
std::size_t PredictClass(std::span<const double> scores);
std::size_t PredictClass(std::span<const std::int64_t> scores);
// Share of rows predicted correctly; throws kInvalidArgument when empty.
double Accuracy(const Model& model, const Dataset& data);

// Fixed-point leaf scale: scores are multiplied by 2^12 and rounded.
inline constexpr int kScoreFractionBits = 12;

struct QuantizedNode {
  std::size_t feature = 0;
  std::uint64_t threshold = 0;
  std::int32_t left = 0;
  std::int32_t right = 0;
};

struct QuantizedLeaf {
  std::int64_t score = 0;
  std::size_t output = 0;
};

struct QuantizedTree {
  std::vector<QuantizedNode> nodes;
  std::vector<QuantizedLeaf> leaves;
  std::int32_t root() const { return nodes.empty() ? LeafRef(0) : 0; }
};

struct QuantizedForest {
  ModelKind kind = ModelKind::kXgboost;
  std::size_t num_classes = 2;
  std::size_t output_count = 1;
  int bitwidth = 16;
  std::vector<FeatureRange> features;
  std::vector<QuantizedTree> trees;

  std::vector<std::string> feature_names() const;
  std::size_t node_count() const;
  // (feature, threshold) of every node, in tree order.
  std::vector<comparison::NodeKey> NodeKeys() const;
  // Largest |aggregate| any output can reach.
  std::uint64_t MaxAbsScore() const;
};

// floor((v - min) / (max - min) * (2^b - 1)), clamped to the range.
std::uint64_t QuantizeValue(double value, const FeatureRange& range, int bitwidth);
std::int64_t QuantizeScore(double score);

// Throws kOutOfRange when a threshold lies outside its feature range.
QuantizedForest Quantize(const Model& model, int bitwidth);
std::vector<std::uint64_t> QuantizeRow(const QuantizedForest& forest, std::span<const double> row);

std::size_t TraverseLeaf(const QuantizedTree& tree, std::span<const std::uint64_t> x);
std::vector<std::int64_t> Scores(const QuantizedForest& forest, std::span<const std::uint64_t> x);

// [tree][node] -> 1 when the node's comparison holds.
using NodeBits = std::vector<std::vector<std::uint8_t>>;
NodeBits EvaluateNodes(const QuantizedForest& forest, std::span<const std::uint64_t> x);

struct Edge {
  std::size_t node = 0;
  bool right = false;
  bool operator==(const Edge&) const = default;
};

struct Path {
  std::size_t tree = 0;
  std::size_t leaf = 0;
  std::vector<Edge> edges;  // root first
};

// Root-to-leaf paths in depth-first (left first) order, grouped by tree.
// Paths with the same condition set share a cluster id.
struct PathTable {
  std::vector<Path> paths;
  std::vector<std::size_t> cluster_of;
  std::size_t cluster_count = 0;
  std::vector<std::size_t> first_path;  // per tree, plus a final end marker

  std::size_t path_count() const { return paths.size(); }
};

PathTable BuildPathTable(const QuantizedForest& forest);

// Conjunction of edge indicators per path, computed in the clear.
std::vector<std::uint8_t> MultiplyPathOracle(const QuantizedForest& forest, const PathTable& table,
                                             const NodeBits& bits);

// Trees split into groups that each fit one SumPath ciphertext. Within a
// group, clusters are ordered by member count (largest first) and cluster c
// sits at slot c of the group's packed ciphertext. Expansion copies the
// extra members of multi-member clusters behind the packed block so every
// path owns one slot.
struct PackGroup {
  std::vector<std::size_t> trees;
  std::vector<std::vector<std::size_t>> members;  // per local cluster, path ids
  std::size_t path_count = 0;
  std::size_t body_size = 0;  // padded length n: a power of two

  std::size_t cluster_count() const { return members.size(); }
  std::size_t tree_count() const { return trees.size(); }
};

struct SlotRef {
  std::size_t group = 0;
  std::size_t slot = 0;
};

struct PackLayout {
  std::vector<PackGroup> groups;
  std::vector<SlotRef> path_slot;  // per path id, after expansion

  // Groups trees greedily while the balanced profile length
  // 2 * max(trees, paths - trees), rounded up to a power of two, fits a half
  // row. A fixed `body_size` forces that length for every group.
  static PackLayout Build(const QuantizedForest& forest, const PathTable& table,
                          std::size_t row_size, std::optional<std::size_t> body_size = std::nullopt);
};

// Smallest power of two >= 2 * max(zeros, randoms), at least 2.
std::size_t BalancedBodySize(std::size_t zeros, std::size_t randoms);

// r * c on the left edge and r * (1 - c) on the right, kept in slot 0 only.
fhe::Ciphertext EdgeValue(const comparison::ComparisonBit& bit, bool right, std::uint64_t r,
                          const fhe::Evaluator& eval);

// One ciphertext per group; slot c holds the SumPath value of cluster c.
struct SumPathPack {
  std::vector<fhe::Ciphertext> ciphertexts;
};

// Depth-first SumPath with fresh nonzero edge masks from `rng`. `bits[i]`
// belongs to plan entry i.
SumPathPack SumPath(const QuantizedForest& forest, const PathTable& table,
                    const PackLayout& layout, const comparison::NodePlan& plan,
                    std::span<const comparison::ComparisonBit> bits, const fhe::Evaluator& eval,
                    Csprng& rng);

// Gives every path its own slot (see PackGroup). Copies are scaled by fresh
// nonzero values so equal clusters do not show up as repeated values.
std::vector<fhe::Ciphertext> ExpandClusters(const SumPathPack& pack, const PackLayout& layout,
                                            const fhe::Evaluator& eval, Csprng& rng);

// Slot position[s] carries the leaf score of the path expanded into slot s
// when that leaf feeds `output`; everything else is zero.
fhe::PlainVector LeafPlaintext(const QuantizedForest& forest, const PathTable& table,
                               const PackLayout& layout, std::size_t group, std::size_t output,
                               std::span<const std::size_t> position,
                               const fhe::FheParams& params);

}  // namespace treecloak::forest

#endif  // TREECLOAK_FOREST_H_
