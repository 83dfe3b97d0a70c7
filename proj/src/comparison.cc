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

#include "treecloak/comparison.h"

#include <algorithm>
#include <bit>
#include <string>

#include "treecloak/error.h"

namespace treecloak::comparison {

NodePlan NodePlan::Build(std::span<const NodeKey> nodes, std::size_t feature_count) {
  std::vector<NodeKey> keys(nodes.begin(), nodes.end());
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

  NodePlan plan;
  plan.feature_count_ = feature_count;
  plan.per_feature_.assign(feature_count, 0);
  for (const auto& key : keys) {
    if (key.feature >= feature_count) {
      throw Error(ErrorCode::kInvalidArgument,
                  "node feature " + std::to_string(key.feature) + " outside feature list");
    }
    plan.entries_.push_back({key, plan.per_feature_[key.feature]++});
  }
  return plan;
}

std::optional<std::size_t> NodePlan::Find(const NodeKey& key) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), key,
                             [](const PlanEntry& e, const NodeKey& k) { return e.key < k; });
  if (it == entries_.end() || it->key != key) return std::nullopt;
  return static_cast<std::size_t>(it - entries_.begin());
}

std::size_t NodePlan::required_repetition() const {
  std::size_t r = 1;
  for (auto c : per_feature_) r = std::max(r, c);
  return r;
}

int EqualityDepth(std::size_t weight) {
  return static_cast<int>(std::bit_width(weight - 1)) + 2;
}

fhe::Ciphertext IsEqualSlots(std::span<const fhe::Ciphertext> planes,
                             std::span<const fhe::PlainVector> label_planes,
                             const fhe::PlainVector& valid, const encoding::CwParams& cw,
                             const fhe::Evaluator& eval) {
  if (planes.size() != cw.length || label_planes.size() != cw.length) {
    throw Error(ErrorCode::kInvalidArgument, "plane count differs from codeword length");
  }
  const std::uint64_t t = eval.params().plain_modulus;

  // Inner product of the two labels: h on equality, below h otherwise.
  std::vector<fhe::Ciphertext> terms;
  for (std::size_t m = 0; m < cw.length; ++m) {
    if (label_planes[m].IsZero()) continue;
    terms.push_back(eval.Multiply(planes[m], label_planes[m]));
  }
  if (terms.empty()) terms.push_back(eval.Multiply(planes[0], label_planes[0]));
  const fhe::Ciphertext k = eval.AddMany(terms);

  // k (k - 1) ... (k - h + 1) vanishes unless k == h, where it is h!.
  std::vector<fhe::Ciphertext> factors;
  std::uint64_t factorial = 1;
  for (std::size_t j = 0; j < cw.weight; ++j) {
    factors.push_back(j == 0 ? k : eval.Sub(k, fhe::ConstantPlain(eval.params(), j)));
    factorial = fhe::MulMod(factorial, j + 1, t);
  }
  const fhe::Ciphertext product = eval.MultiplyMany(factors);

  const std::uint64_t inverse = fhe::PowMod(factorial, t - 2, t);
  std::vector<std::uint64_t> scale(valid.size());
  for (std::size_t i = 0; i < valid.size(); ++i) scale[i] = fhe::MulMod(valid[i], inverse, t);
  return eval.Multiply(product, fhe::PlainVector(std::move(scale)));
}

fhe::Ciphertext IsEqual(std::span<const fhe::Ciphertext> planes, const encoding::CwCodeword& label,
                        const fhe::Evaluator& eval) {
  std::vector<fhe::PlainVector> label_planes;
  for (std::size_t m = 0; m < label.length(); ++m) {
    label_planes.push_back(fhe::ConstantPlain(eval.params(), label.bit(m)));
  }
  return IsEqualSlots(planes, label_planes, fhe::ConstantPlain(eval.params(), 1),
                      encoding::CwParams{label.length(), label.weight()}, eval);
}

std::vector<fhe::PlainVector> PackPe(const encoding::PeVector& pe, const fhe::FheParams& params) {
  if (pe.empty()) throw Error(ErrorCode::kInvalidArgument, "empty PE vector");
  if (pe.size() > params.row_size()) throw Error(ErrorCode::kCapacity, "PE vector exceeds a row");
  std::vector<fhe::PlainVector> planes;
  for (std::size_t m = 0; m < pe[0].length(); ++m) {
    std::vector<std::uint64_t> slots(params.slot_count, 0);
    for (std::size_t d = 0; d < pe.size(); ++d) slots[d] = pe[d].bit(m);
    planes.emplace_back(std::move(slots));
  }
  return planes;
}

fhe::Ciphertext WindowSum(const fhe::Ciphertext& c, std::size_t width,
                          const fhe::Evaluator& eval) {
  if (width == 0 || width > eval.params().row_size()) {
    throw Error(ErrorCode::kInvalidArgument, "window width outside the row");
  }
  std::optional<fhe::Ciphertext> acc;
  fhe::Ciphertext window = c;  // covers `span` consecutive slots
  std::size_t span = 1;
  std::size_t offset = 0;
  for (std::size_t rest = width;; rest >>= 1) {
    if (rest & 1) {
      fhe::Ciphertext shifted = eval.RotateRows(window, offset);
      acc = acc ? eval.Add(*acc, shifted) : shifted;
      offset += span;
    }
    if (rest <= 1) break;
    window = eval.Add(window, eval.RotateRows(window, span));
    span <<= 1;
  }
  return *acc;
}

ComparisonBit GreaterThan(std::span<const fhe::Ciphertext> pe_planes, const encoding::ReVector& re,
                          const encoding::CwParams& cw, const fhe::Evaluator& eval) {
  const auto& params = eval.params();
  if (re.empty() || re.size() > params.row_size()) {
    throw Error(ErrorCode::kInvalidArgument, "RE vector size outside the row");
  }
  std::vector<std::vector<std::uint64_t>> label(cw.length,
                                                std::vector<std::uint64_t>(params.slot_count, 0));
  std::vector<std::uint64_t> valid(params.slot_count, 0);
  for (std::size_t d = 0; d < re.size(); ++d) {
    if (!re[d]) continue;
    if (re[d]->length() != cw.length) {
      throw Error(ErrorCode::kInvalidArgument, "RE label length differs from CW length");
    }
    valid[d] = 1;
    for (std::size_t m = 0; m < cw.length; ++m) label[m][d] = re[d]->bit(m);
  }
  std::vector<fhe::PlainVector> label_planes;
  for (auto& l : label) label_planes.emplace_back(std::move(l));
  // Covers are disjoint and a PE path meets at most one of them, so the level
  // OR is a plain sum.
  const fhe::Ciphertext eq =
      IsEqualSlots(pe_planes, label_planes, fhe::PlainVector(std::move(valid)), cw, eval);
  return {WindowSum(eq, re.size(), eval), 0};
}

std::vector<ComparisonBit> BatchCompare(std::span<const fhe::Ciphertext> planes,
                                        const encoding::QueryLayout& layout, const NodePlan& plan,
                                        const fhe::Evaluator& eval) {
  const auto& params = eval.params();
  if (plan.feature_count() != layout.feature_count()) {
    throw Error(ErrorCode::kLayout, "plan and layout disagree on the feature count");
  }
  if (plan.required_repetition() > layout.repetition()) {
    throw Error(ErrorCode::kLayout, "layout repetition " + std::to_string(layout.repetition()) +
                                        " below plan requirement " +
                                        std::to_string(plan.required_repetition()));
  }
  if (layout.slot_count() != params.slot_count) {
    throw Error(ErrorCode::kLayout, "layout slot count differs from parameters");
  }
  if (plan.size() == 0) return {};

  const auto& cw = layout.cw();
  std::vector<std::vector<std::uint64_t>> label(cw.length,
                                                std::vector<std::uint64_t>(params.slot_count, 0));
  std::vector<std::uint64_t> valid(params.slot_count, 0);
  for (const auto& entry : plan.entries()) {
    const auto re = encoding::ReEncode(entry.key.threshold, layout.bitwidth(), cw);
    for (std::size_t d = 0; d < re.size(); ++d) {
      if (!re[d]) continue;
      const std::size_t slot = layout.UnitSlot(entry.key.feature, d, entry.repetition);
      valid[slot] = 1;
      for (std::size_t m = 0; m < cw.length; ++m) label[m][slot] = re[d]->bit(m);
    }
  }
  std::vector<fhe::PlainVector> label_planes;
  for (auto& l : label) label_planes.emplace_back(std::move(l));
  const fhe::Ciphertext eq =
      IsEqualSlots(planes, label_planes, fhe::PlainVector(std::move(valid)), cw, eval);
  const fhe::Ciphertext sums = WindowSum(eq, layout.levels(), eval);

  const std::size_t half = params.row_size();
  std::optional<fhe::Ciphertext> swapped;
  std::vector<ComparisonBit> bits;
  bits.reserve(plan.size());
  for (const auto& entry : plan.entries()) {
    const std::size_t slot = layout.UnitSlot(entry.key.feature, 0, entry.repetition);
    if (slot < half) {
      bits.push_back({eval.RotateRows(sums, slot), 0});
    } else {
      if (!swapped) swapped = eval.RotateColumns(sums);
      bits.push_back({eval.RotateRows(*swapped, slot - half), 0});
    }
  }
  return bits;
}

}  // namespace treecloak::comparison
