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

#include "treecloak/forest.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <map>
#include <tuple>

#include "json.hpp"
#include "treecloak/error.h"
#include "treecloak/random.h"

namespace treecloak::forest {
namespace {

using Json = nlohmann::ordered_json;

[[noreturn]] void SchemaError(const std::string& msg) { throw Error(ErrorCode::kSchema, msg); }

double ParseReal(const Json& v, const std::string& what) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    char* end = nullptr;
    const double d = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) SchemaError(what + ": bad decimal '" + s + "'");
    return d;
  }
  SchemaError(what + ": expected a number or decimal string");
}

std::size_t ParseIndex(const Json& v, const std::string& what) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    SchemaError(what + ": expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

const Json& Field(const Json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) SchemaError(where + ": missing '" + key + "'");
  return *it;
}

// Checks that child references form a single tree rooted at node 0.
void ValidateShape(std::size_t node_count, std::size_t leaf_count,
                   const std::vector<std::pair<std::int32_t, std::int32_t>>& children,
                   const std::string& where) {
  if (leaf_count != node_count + 1) {
    SchemaError(where + ": expected " + std::to_string(node_count + 1) + " leaves, found " +
                std::to_string(leaf_count));
  }
  std::vector<int> node_refs(node_count, 0), leaf_refs(leaf_count, 0);
  for (const auto& [l, r] : children) {
    for (std::int32_t ref : {l, r}) {
      if (IsLeafRef(ref)) {
        if (LeafIndex(ref) >= leaf_count) SchemaError(where + ": leaf reference out of range");
        ++leaf_refs[LeafIndex(ref)];
      } else {
        if (static_cast<std::size_t>(ref) >= node_count) {
          SchemaError(where + ": node reference out of range");
        }
        if (ref == 0) SchemaError(where + ": root referenced as a child");
        ++node_refs[ref];
      }
    }
  }
  for (std::size_t i = 1; i < node_count; ++i) {
    if (node_refs[i] != 1) SchemaError(where + ": node " + std::to_string(i) + " is not a tree node");
  }
  for (std::size_t i = 0; i < leaf_count && node_count > 0; ++i) {
    if (leaf_refs[i] != 1) SchemaError(where + ": leaf " + std::to_string(i) + " is not a tree leaf");
  }
  // Every node has one parent; reachability rules out detached cycles.
  std::size_t seen = 0;
  std::vector<std::int32_t> stack;
  if (node_count > 0) stack.push_back(0);
  while (!stack.empty()) {
    const auto n = stack.back();
    stack.pop_back();
    ++seen;
    for (auto c : {children[n].first, children[n].second}) {
      if (!IsLeafRef(c)) stack.push_back(c);
    }
  }
  if (seen != node_count) SchemaError(where + ": unreachable nodes");
}

}  // namespace

std::string_view ModelKindName(ModelKind kind) {
  return kind == ModelKind::kAdaboost ? "adaboost" : "xgboost";
}

std::size_t Model::node_count() const {
  std::size_t n = 0;
  for (const auto& t : trees) n += t.nodes.size();
  return n;
}

std::size_t Model::leaf_count() const {
  std::size_t n = 0;
  for (const auto& t : trees) n += t.leaves.size();
  return n;
}

std::vector<std::string> Model::feature_names() const {
  std::vector<std::string> names;
  for (const auto& f : features) names.push_back(f.name);
  return names;
}

void Model::Validate() const {
  if (num_classes < 2) SchemaError("num_classes must be at least 2");
  if (features.empty()) SchemaError("model has no features");
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& f = features[i];
    if (f.name.empty()) SchemaError("feature " + std::to_string(i) + " has no name");
    if (!(f.max > f.min) || !std::isfinite(f.min) || !std::isfinite(f.max)) {
      SchemaError("feature '" + f.name + "' needs finite min < max");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (features[j].name == f.name) SchemaError("duplicate feature '" + f.name + "'");
    }
  }
  for (std::size_t t = 0; t < trees.size(); ++t) {
    const auto& tree = trees[t];
    const std::string where = "tree " + std::to_string(t);
    std::vector<std::pair<std::int32_t, std::int32_t>> children;
    for (const auto& n : tree.nodes) {
      if (n.feature >= features.size()) SchemaError(where + ": unknown feature index");
      if (!std::isfinite(n.threshold)) SchemaError(where + ": non-finite threshold");
      children.emplace_back(n.left, n.right);
    }
    ValidateShape(tree.nodes.size(), tree.leaves.size(), children, where);
    if (tree.class_id && *tree.class_id >= num_classes) SchemaError(where + ": class_id out of range");
    if (kind == ModelKind::kAdaboost && (!tree.weight || !std::isfinite(*tree.weight))) {
      SchemaError(where + ": AdaBoost trees need a weight");
    }
    for (const auto& leaf : tree.leaves) {
      if (leaf.class_id && *leaf.class_id >= num_classes) SchemaError(where + ": leaf class out of range");
      if (!std::isfinite(leaf.score)) SchemaError(where + ": non-finite leaf score");
      const bool needs_class =
          kind == ModelKind::kAdaboost || (num_classes > 2 && !tree.class_id);
      if (needs_class && !leaf.class_id) SchemaError(where + ": leaf needs a class_id");
    }
  }
}

Model ParseModel(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    SchemaError(std::string("model JSON: ") + e.what());
  }
  if (!doc.is_object()) SchemaError("model document must be an object");

  Model model;
  const auto& kind = Field(doc, "model_kind", "model");
  if (kind == "xgboost") {
    model.kind = ModelKind::kXgboost;
  } else if (kind == "adaboost") {
    model.kind = ModelKind::kAdaboost;
  } else {
    SchemaError("unknown model_kind");
  }
  model.num_classes = ParseIndex(Field(doc, "num_classes", "model"), "num_classes");

  const auto& features = Field(doc, "features", "model");
  if (!features.is_array()) SchemaError("features must be an array");
  for (const auto& f : features) {
    const auto& name = Field(f, "name", "feature");
    if (!name.is_string()) SchemaError("feature name must be a string");
    model.features.push_back({name.get<std::string>(), ParseReal(Field(f, "min", "feature"), "min"),
                              ParseReal(Field(f, "max", "feature"), "max")});
  }

  const auto& trees = Field(doc, "trees", "model");
  if (!trees.is_array()) SchemaError("trees must be an array");
  for (std::size_t t = 0; t < trees.size(); ++t) {
    const auto& jt = trees[t];
    const std::string where = "tree " + std::to_string(t);
    Tree tree;
    if (jt.contains("class_id")) tree.class_id = ParseIndex(jt["class_id"], where + " class_id");
    if (jt.contains("weight")) tree.weight = ParseReal(jt["weight"], where + " weight");
    for (const auto& jn : Field(jt, "nodes", where)) {
      Node node;
      const auto& feature = Field(jn, "feature", where + " node");
      if (feature.is_string()) {
        const auto name = feature.get<std::string>();
        std::size_t i = 0;
        while (i < model.features.size() && model.features[i].name != name) ++i;
        if (i == model.features.size()) SchemaError(where + ": unknown feature '" + name + "'");
        node.feature = i;
      } else {
        node.feature = ParseIndex(feature, where + " feature");
      }
      node.threshold = ParseReal(Field(jn, "threshold", where + " node"), where + " threshold");
      const auto& left = Field(jn, "left", where + " node");
      const auto& right = Field(jn, "right", where + " node");
      if (!left.is_number_integer() || !right.is_number_integer()) {
        SchemaError(where + ": child references must be integers");
      }
      node.left = left.get<std::int32_t>();
      node.right = right.get<std::int32_t>();
      tree.nodes.push_back(node);
    }
    for (const auto& jl : Field(jt, "leaves", where)) {
      Leaf leaf;
      if (jl.contains("score")) {
        leaf.score = ParseReal(jl["score"], where + " score");
      } else if (model.kind == ModelKind::kXgboost) {
        SchemaError(where + ": leaf without score");
      }
      if (jl.contains("class_id")) leaf.class_id = ParseIndex(jl["class_id"], where + " leaf class");
      tree.leaves.push_back(leaf);
    }
    model.trees.push_back(std::move(tree));
  }
  model.Validate();
  return model;
}

std::string SerializeModel(const Model& model) {
  Json doc;
  doc["model_kind"] = ModelKindName(model.kind);
  doc["num_classes"] = model.num_classes;
  doc["features"] = Json::array();
  for (const auto& f : model.features) {
    doc["features"].push_back({{"name", f.name}, {"min", f.min}, {"max", f.max}});
  }
  doc["trees"] = Json::array();
  for (const auto& tree : model.trees) {
    Json jt = Json::object();
    if (tree.class_id) jt["class_id"] = *tree.class_id;
    if (tree.weight) jt["weight"] = *tree.weight;
    jt["nodes"] = Json::array();
    for (const auto& n : tree.nodes) {
      jt["nodes"].push_back({{"feature", model.features[n.feature].name},
                             {"threshold", n.threshold},
                             {"left", n.left},
                             {"right", n.right}});
    }
    jt["leaves"] = Json::array();
    for (const auto& l : tree.leaves) {
      Json jl = {{"score", l.score}};
      if (l.class_id) jl["class_id"] = *l.class_id;
      jt["leaves"].push_back(std::move(jl));
    }
    doc["trees"].push_back(std::move(jt));
  }
  return doc.dump(2) + "\n";
}

LeafContribution Contribution(const Model& model, const Tree& tree, const Leaf& leaf) {
  if (model.kind == ModelKind::kAdaboost) {
    const double w = tree.weight.value_or(0.0);
    if (model.num_classes == 2) return {0, leaf.class_id.value_or(0) == 1 ? w : -w};
    return {leaf.class_id.value_or(0), w};
  }
  if (model.num_classes == 2) return {0, leaf.score};
  return {tree.class_id ? *tree.class_id : leaf.class_id.value_or(0), leaf.score};
}

std::size_t TraverseLeaf(const Tree& tree, std::span<const double> row) {
  std::int32_t ref = tree.root();
  while (!IsLeafRef(ref)) {
    const auto& n = tree.nodes[ref];
    ref = row[n.feature] > n.threshold ? n.right : n.left;
  }
  return LeafIndex(ref);
}

std::vector<double> RawScores(const Model& model, std::span<const double> row) {
  if (row.size() != model.features.size()) {
    throw Error(ErrorCode::kInvalidArgument, "row width differs from feature count");
  }
  std::vector<double> scores(model.output_count(), 0.0);
  for (const auto& tree : model.trees) {
    const auto c = Contribution(model, tree, tree.leaves[TraverseLeaf(tree, row)]);
    scores[c.output] += c.value;
  }
  return scores;
}

namespace {

template <typename T>
std::size_t Argmax(std::span<const T> scores) {
  if (scores.empty()) throw Error(ErrorCode::kInvalidArgument, "no scores");
  if (scores.size() == 1) return scores[0] > 0 ? 1 : 0;
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

}  // namespace

std::size_t PredictClass(std::span<const double> scores) { return Argmax(scores); }
std::size_t PredictClass(std::span<const std::int64_t> scores) { return Argmax(scores); }

double Accuracy(const Model& model, const Dataset& data) {
  if (data.size() == 0 || !data.has_labels()) {
    throw Error(ErrorCode::kInvalidArgument, "accuracy needs a non-empty labelled dataset");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    correct += PredictClass(RawScores(model, data.rows[i])) == data.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::vector<std::string> QuantizedForest::feature_names() const {
  std::vector<std::string> names;
  for (const auto& f : features) names.push_back(f.name);
  return names;
}

std::size_t QuantizedForest::node_count() const {
  std::size_t n = 0;
  for (const auto& t : trees) n += t.nodes.size();
  return n;
}

std::vector<comparison::NodeKey> QuantizedForest::NodeKeys() const {
  std::vector<comparison::NodeKey> keys;
  for (const auto& t : trees) {
    for (const auto& n : t.nodes) keys.push_back({n.feature, n.threshold});
  }
  return keys;
}

std::uint64_t QuantizedForest::MaxAbsScore() const {
  std::vector<std::uint64_t> bound(output_count, 0);
  for (const auto& t : trees) {
    std::vector<std::uint64_t> tree_max(output_count, 0);
    for (const auto& l : t.leaves) {
      tree_max[l.output] = std::max(tree_max[l.output], static_cast<std::uint64_t>(std::llabs(l.score)));
    }
    for (std::size_t o = 0; o < output_count; ++o) bound[o] += tree_max[o];
  }
  return bound.empty() ? 0 : *std::max_element(bound.begin(), bound.end());
}

std::uint64_t QuantizeValue(double value, const FeatureRange& range, int bitwidth) {
  if (bitwidth < 1 || bitwidth > 32) throw Error(ErrorCode::kInvalidArgument, "bitwidth outside [1, 32]");
  const double top = static_cast<double>((std::uint64_t{1} << bitwidth) - 1);
  if (!(value > range.min)) return 0;
  if (value >= range.max) return static_cast<std::uint64_t>(top);
  const double q = std::floor((value - range.min) / (range.max - range.min) * top);
  return static_cast<std::uint64_t>(std::clamp(q, 0.0, top));
}

std::int64_t QuantizeScore(double score) {
  return std::llround(std::ldexp(score, kScoreFractionBits));
}

QuantizedForest Quantize(const Model& model, int bitwidth) {
  model.Validate();
  QuantizedForest out;
  out.kind = model.kind;
  out.num_classes = model.num_classes;
  out.output_count = model.output_count();
  out.bitwidth = bitwidth;
  out.features = model.features;
  for (const auto& tree : model.trees) {
    QuantizedTree qt;
    for (const auto& n : tree.nodes) {
      const auto& range = model.features[n.feature];
      if (n.threshold < range.min || n.threshold > range.max) {
        throw Error(ErrorCode::kOutOfRange, "threshold " + std::to_string(n.threshold) +
                                                " outside the range of '" + range.name + "'");
      }
      qt.nodes.push_back({n.feature, QuantizeValue(n.threshold, range, bitwidth), n.left, n.right});
    }
    for (const auto& l : tree.leaves) {
      const auto c = Contribution(model, tree, l);
      qt.leaves.push_back({QuantizeScore(c.value), c.output});
    }
    out.trees.push_back(std::move(qt));
  }
  return out;
}

std::vector<std::uint64_t> QuantizeRow(const QuantizedForest& forest, std::span<const double> row) {
  if (row.size() != forest.features.size()) {
    throw Error(ErrorCode::kInvalidArgument, "row width differs from feature count");
  }
  std::vector<std::uint64_t> x;
  for (std::size_t i = 0; i < row.size(); ++i) {
    x.push_back(QuantizeValue(row[i], forest.features[i], forest.bitwidth));
  }
  return x;
}

std::size_t TraverseLeaf(const QuantizedTree& tree, std::span<const std::uint64_t> x) {
  std::int32_t ref = tree.root();
  while (!IsLeafRef(ref)) {
    const auto& n = tree.nodes[ref];
    ref = x[n.feature] > n.threshold ? n.right : n.left;
  }
  return LeafIndex(ref);
}

std::vector<std::int64_t> Scores(const QuantizedForest& forest, std::span<const std::uint64_t> x) {
  std::vector<std::int64_t> scores(forest.output_count, 0);
  for (const auto& tree : forest.trees) {
    const auto& leaf = tree.leaves[TraverseLeaf(tree, x)];
    scores[leaf.output] += leaf.score;
  }
  return scores;
}

NodeBits EvaluateNodes(const QuantizedForest& forest, std::span<const std::uint64_t> x) {
  NodeBits bits;
  for (const auto& tree : forest.trees) {
    std::vector<std::uint8_t> b;
    for (const auto& n : tree.nodes) b.push_back(x[n.feature] > n.threshold);
    bits.push_back(std::move(b));
  }
  return bits;
}

PathTable BuildPathTable(const QuantizedForest& forest) {
  PathTable table;
  std::map<std::vector<std::tuple<std::size_t, std::uint64_t, bool>>, std::size_t> clusters;
  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    const auto& tree = forest.trees[t];
    table.first_path.push_back(table.paths.size());
    std::vector<Edge> prefix;
    auto visit = [&](auto& self, std::int32_t ref) -> void {
      if (IsLeafRef(ref)) {
        std::vector<std::tuple<std::size_t, std::uint64_t, bool>> key;
        for (const auto& e : prefix) {
          key.emplace_back(tree.nodes[e.node].feature, tree.nodes[e.node].threshold, e.right);
        }
        std::sort(key.begin(), key.end());
        key.erase(std::unique(key.begin(), key.end()), key.end());
        auto [it, inserted] = clusters.emplace(std::move(key), clusters.size());
        table.cluster_of.push_back(it->second);
        table.paths.push_back({t, LeafIndex(ref), prefix});
        return;
      }
      const auto& n = tree.nodes[ref];
      prefix.push_back({static_cast<std::size_t>(ref), false});
      self(self, n.left);
      prefix.back().right = true;
      self(self, n.right);
      prefix.pop_back();
    };
    visit(visit, tree.root());
  }
  table.first_path.push_back(table.paths.size());
  table.cluster_count = clusters.size();
  return table;
}

std::vector<std::uint8_t> MultiplyPathOracle(const QuantizedForest& forest, const PathTable& table,
                                             const NodeBits& bits) {
  std::vector<std::uint8_t> out;
  for (const auto& p : table.paths) {
    if (p.tree >= forest.trees.size()) throw Error(ErrorCode::kInvalidArgument, "path table mismatch");
    std::uint8_t v = 1;
    for (const auto& e : p.edges) v &= e.right ? bits[p.tree][e.node] : 1 - bits[p.tree][e.node];
    out.push_back(v);
  }
  return out;
}

std::size_t BalancedBodySize(std::size_t zeros, std::size_t randoms) {
  return std::max<std::size_t>(2, std::bit_ceil(2 * std::max(zeros, randoms)));
}

PackLayout PackLayout::Build(const QuantizedForest& forest, const PathTable& table,
                             std::size_t row_size, std::optional<std::size_t> body_size) {
  if (body_size && (!std::has_single_bit(*body_size) || *body_size < 2 || *body_size > row_size)) {
    throw Error(ErrorCode::kInvalidArgument, "body size must be a power of two in [2, N/2]");
  }
  const std::size_t limit = body_size.value_or(row_size);
  PackLayout layout;
  layout.path_slot.resize(table.path_count());

  std::vector<std::vector<std::size_t>> tree_groups;
  std::size_t trees = 0, paths = 0;
  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    const std::size_t p = table.first_path[t + 1] - table.first_path[t];
    if (BalancedBodySize(1, p - 1) > limit) {
      throw Error(ErrorCode::kCapacity, "tree " + std::to_string(t) + " has too many paths for one ciphertext");
    }
    if (tree_groups.empty() || BalancedBodySize(trees + 1, paths + p - trees - 1) > limit) {
      tree_groups.emplace_back();
      trees = paths = 0;
    }
    tree_groups.back().push_back(t);
    ++trees;
    paths += p;
  }

  for (auto& group_trees : tree_groups) {
    PackGroup g;
    g.trees = std::move(group_trees);
    std::map<std::size_t, std::size_t> local;  // global cluster -> member list
    for (auto t : g.trees) {
      for (std::size_t p = table.first_path[t]; p < table.first_path[t + 1]; ++p) {
        auto [it, inserted] = local.emplace(table.cluster_of[p], g.members.size());
        if (inserted) g.members.emplace_back();
        g.members[it->second].push_back(p);
        ++g.path_count;
      }
    }
    std::stable_sort(g.members.begin(), g.members.end(),
                     [](const auto& a, const auto& b) { return a.size() > b.size(); });
    const std::size_t group_index = layout.groups.size();
    const std::size_t clusters = g.members.size();
    std::size_t base = clusters;
    for (std::size_t k = 0; k < g.members.front().size(); ++k) {
      std::size_t count = 0;
      for (std::size_t c = 0; c < clusters && g.members[c].size() > k; ++c, ++count) {
        layout.path_slot[g.members[c][k]] = {group_index, k == 0 ? c : base + c};
      }
      if (k > 0) base += count;
    }
    g.body_size = body_size.value_or(BalancedBodySize(g.tree_count(), g.path_count - g.tree_count()));
    layout.groups.push_back(std::move(g));
  }
  return layout;
}

fhe::Ciphertext EdgeValue(const comparison::ComparisonBit& bit, bool right, std::uint64_t r,
                          const fhe::Evaluator& eval) {
  const auto& params = eval.params();
  if (r == 0 || r >= params.plain_modulus) {
    throw Error(ErrorCode::kInvalidArgument, "edge mask must lie in [1, t)");
  }
  std::vector<std::uint64_t> mask(params.slot_count, 0);
  mask[bit.slot] = r;
  fhe::PlainVector plain(std::move(mask));
  const fhe::Ciphertext left = eval.Multiply(bit.ciphertext, plain);
  return right ? eval.SubFrom(plain, left) : left;
}

SumPathPack SumPath(const QuantizedForest& forest, const PathTable& table,
                    const PackLayout& layout, const comparison::NodePlan& plan,
                    std::span<const comparison::ComparisonBit> bits, const fhe::Evaluator& eval,
                    Csprng& rng) {
  if (bits.size() != plan.size()) throw Error(ErrorCode::kInvalidArgument, "one bit per plan entry expected");
  for (const auto& b : bits) {
    if (b.slot != 0) throw Error(ErrorCode::kInvalidArgument, "comparison bits must sit in slot 0");
  }
  const auto& params = eval.params();
  const std::size_t half = params.row_size();
  const std::uint64_t t = params.plain_modulus;

  SumPathPack pack;
  for (const auto& group : layout.groups) {
    // Path id -> local cluster for the cluster representatives.
    std::map<std::size_t, std::size_t> representative;
    for (std::size_t c = 0; c < group.members.size(); ++c) representative[group.members[c][0]] = c;

    std::optional<fhe::Ciphertext> acc;
    for (auto tree_id : group.trees) {
      const auto& tree = forest.trees[tree_id];
      std::size_t next_path = table.first_path[tree_id];
      auto visit = [&](auto& self, std::int32_t ref, const std::optional<fhe::Ciphertext>& sum) -> void {
        if (IsLeafRef(ref)) {
          const std::size_t path = next_path++;
          auto it = representative.find(path);
          if (it == representative.end()) return;
          const fhe::Ciphertext value = sum ? *sum : eval.Encrypt(fhe::ZeroPlain(params));
          const std::size_t c = it->second;
          const fhe::Ciphertext placed = eval.RotateRows(value, c == 0 ? 0 : half - c);
          acc = acc ? eval.Add(*acc, placed) : placed;
          return;
        }
        const auto& n = tree.nodes[ref];
        const auto entry = plan.Find({n.feature, n.threshold});
        if (!entry) {
          throw Error(ErrorCode::kInvalidArgument,
                      "no comparison bit for node " + std::to_string(ref) + " of tree " + std::to_string(tree_id));
        }
        for (bool right : {false, true}) {
          const fhe::Ciphertext edge = EdgeValue(bits[*entry], right, rng.UniformNonzero(t), eval);
          self(self, right ? n.right : n.left, sum ? eval.Add(*sum, edge) : edge);
        }
      };
      visit(visit, tree.root(), std::nullopt);
    }
    pack.ciphertexts.push_back(*acc);
  }
  return pack;
}

std::vector<fhe::Ciphertext> ExpandClusters(const SumPathPack& pack, const PackLayout& layout,
                                            const fhe::Evaluator& eval, Csprng& rng) {
  if (pack.ciphertexts.size() != layout.groups.size()) {
    throw Error(ErrorCode::kInvalidArgument, "pack and layout disagree on the group count");
  }
  const auto& params = eval.params();
  const std::size_t half = params.row_size();
  std::vector<fhe::Ciphertext> out;
  for (std::size_t g = 0; g < layout.groups.size(); ++g) {
    const auto& group = layout.groups[g];
    fhe::Ciphertext expanded = pack.ciphertexts[g];
    std::size_t base = group.cluster_count();
    for (std::size_t k = 1; k < group.members.front().size(); ++k) {
      std::vector<std::uint64_t> mask(params.slot_count, 0);
      std::size_t count = 0;
      while (count < group.cluster_count() && group.members[count].size() > k) {
        mask[count++] = rng.UniformNonzero(params.plain_modulus);
      }
      const fhe::Ciphertext copy = eval.Multiply(pack.ciphertexts[g], fhe::PlainVector(std::move(mask)));
      expanded = eval.Add(expanded, eval.RotateRows(copy, half - base));
      base += count;
    }
    out.push_back(std::move(expanded));
  }
  return out;
}

fhe::PlainVector LeafPlaintext(const QuantizedForest& forest, const PathTable& table,
                               const PackLayout& layout, std::size_t group, std::size_t output,
                               std::span<const std::size_t> position,
                               const fhe::FheParams& params) {
  if (group >= layout.groups.size()) throw Error(ErrorCode::kInvalidArgument, "unknown group");
  if (output >= forest.output_count) throw Error(ErrorCode::kInvalidArgument, "unknown output class");
  std::vector<std::int64_t> values(params.slot_count, 0);
  for (const auto& members : layout.groups[group].members) {
    for (auto p : members) {
      const std::size_t slot = layout.path_slot[p].slot;
      if (slot >= position.size() || position[slot] >= params.slot_count) {
        throw Error(ErrorCode::kInvalidArgument, "slot position map too short");
      }
      const auto& path = table.paths[p];
      const auto& leaf = forest.trees[path.tree].leaves[path.leaf];
      if (leaf.output == output) values[position[slot]] = leaf.score;
    }
  }
  return fhe::Encode(params, values);
}

}  // namespace treecloak::forest
