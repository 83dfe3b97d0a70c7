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

#ifndef TREECLOAK_COMPARISON_H_
#define TREECLOAK_COMPARISON_H_

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "treecloak/encoding.h"
#include "treecloak/fhe.h"

namespace treecloak::comparison {

// A (feature, quantized threshold) pair as it appears on a tree node.
struct NodeKey {
  std::size_t feature = 0;
  std::uint64_t threshold = 0;
  auto operator<=>(const NodeKey&) const = default;
};

// One distinct comparison. `repetition` picks the copy of the feature's
// query units that this comparison reads.
struct PlanEntry {
  NodeKey key;
  std::size_t repetition = 0;
  bool operator==(const PlanEntry&) const = default;
};

// Distinct comparisons, sorted by (feature, threshold).
class NodePlan {
 public:
  NodePlan() = default;

  // Duplicate keys collapse to one entry.
  static NodePlan Build(std::span<const NodeKey> nodes, std::size_t feature_count);

  const std::vector<PlanEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t feature_count() const { return feature_count_; }
  std::optional<std::size_t> Find(const NodeKey& key) const;
  // Thresholds per feature; the query repetition must be at least the max.
  const std::vector<std::size_t>& thresholds_per_feature() const { return per_feature_; }
  std::size_t required_repetition() const;

 private:
  std::vector<PlanEntry> entries_;
  std::vector<std::size_t> per_feature_;
  std::size_t feature_count_ = 0;
};

// Holds 1 when the compared feature exceeds the threshold, else 0, at `slot`.
// Other slots carry unrelated values.
struct ComparisonBit {
  fhe::Ciphertext ciphertext;
  std::size_t slot = 0;
};

// Multiplicative depth of the equality circuit for weight-h codewords.
int EqualityDepth(std::size_t weight);

// Slotwise codeword equality. planes[m] holds bit m of the encrypted label in
// every slot; label_planes[m] holds bit m of the plaintext label. Slots where
// `valid` is 0 yield 0. Consumes exactly EqualityDepth(h) levels.
fhe::Ciphertext IsEqualSlots(std::span<const fhe::Ciphertext> planes,
                             std::span<const fhe::PlainVector> label_planes,
                             const fhe::PlainVector& valid, const encoding::CwParams& cw,
                             const fhe::Evaluator& eval);

// Equality against one label broadcast to every slot.
fhe::Ciphertext IsEqual(std::span<const fhe::Ciphertext> planes, const encoding::CwCodeword& label,
                        const fhe::Evaluator& eval);

// Plane m, slot d <- bit m of pe[d].
std::vector<fhe::PlainVector> PackPe(const encoding::PeVector& pe, const fhe::FheParams& params);

// Greater-than of an encrypted PE vector (packed as in PackPe) against a
// plaintext RE vector. The result lands in slot 0.
ComparisonBit GreaterThan(std::span<const fhe::Ciphertext> pe_planes, const encoding::ReVector& re,
                          const encoding::CwParams& cw, const fhe::Evaluator& eval);

// Evaluates every plan entry against a decompressed query in one SIMD pass
// and realigns each result to slot 0. Entry i of the result belongs to plan
// entry i.
std::vector<ComparisonBit> BatchCompare(std::span<const fhe::Ciphertext> planes,
                                        const encoding::QueryLayout& layout, const NodePlan& plan,
                                        const fhe::Evaluator& eval);

// Sums slots [i, i + width) into slot i within each half-row using
// rotate-and-add over the binary digits of `width`.
fhe::Ciphertext WindowSum(const fhe::Ciphertext& c, std::size_t width, const fhe::Evaluator& eval);

}  // namespace treecloak::comparison

#endif  // TREECLOAK_COMPARISON_H_
