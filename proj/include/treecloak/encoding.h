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

#ifndef TREECLOAK_ENCODING_H_
#define TREECLOAK_ENCODING_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "treecloak/fhe.h"

namespace treecloak::encoding {

// C(n, k), saturating at UINT64_MAX.
std::uint64_t Binomial(std::uint64_t n, std::uint64_t k);

struct CwParams {
  std::size_t length = 0;  // codeword bits (l)
  std::size_t weight = 0;  // ones per codeword (h)

  std::uint64_t codebook_size() const { return Binomial(length, weight); }

  // Shortest length whose weight-h codebook holds `alphabet` labels.
  static CwParams ForAlphabet(std::uint64_t alphabet, std::size_t weight);
  // Labels for a bitwidth-b comparison tree: weight 2, except 32-bit inputs
  // which use weight 4 to keep the plane count in the hundreds.
  static CwParams ForBitwidth(int bitwidth, std::optional<std::size_t> weight = std::nullopt);

  bool operator==(const CwParams&) const = default;
};

// Fixed-length bit string with a fixed number of ones.
class CwCodeword {
 public:
  CwCodeword() = default;
  explicit CwCodeword(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {}

  std::span<const std::uint8_t> bits() const { return bits_; }
  std::uint8_t bit(std::size_t i) const { return bits_[i]; }
  std::size_t length() const { return bits_.size(); }
  std::size_t weight() const;
  // "110100"-style rendering, bit 0 first.
  std::string ToString() const;
  static CwCodeword FromString(std::string_view text);

  bool operator==(const CwCodeword&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
};

// Lexicographic unranking of weight-h subsets of {0..l-1}; bit 0 is the
// leftmost character. Throws kOutOfRange when value >= C(l, h).
CwCodeword CwEncode(std::uint64_t value, const CwParams& cw);
// Inverse of CwEncode.
std::uint64_t CwRank(const CwCodeword& word);

// Labels along the comparison tree (CBT) over bitwidth-b values: b + 1 levels,
// level d has 2^d nodes and node j covers leaves [j * 2^(b-d), (j+1) * 2^(b-d)).
using PeVector = std::vector<CwCodeword>;
using ReVector = std::vector<std::optional<CwCodeword>>;

std::size_t CbtLevels(int bitwidth);
std::uint64_t CbtMaxValue(int bitwidth);

// Root-to-leaf labels of leaf `value`.
PeVector PeEncode(std::uint64_t value, int bitwidth, const CwParams& cw);
// Minimal node cover of the leaves in (value, 2^b - 1]; one node per level at
// most, std::nullopt where a level contributes nothing.
ReVector ReEncode(std::uint64_t value, int bitwidth, const CwParams& cw);

// Where a feature's comparison units live. Unit (feature f, level d,
// repetition r) sits at slot features[f].start + d + r * gap. A feature never
// straddles the two half-rows, and gap * repetition <= N / 2.
struct FeatureSlot {
  std::string name;
  std::size_t start = 0;
  bool operator==(const FeatureSlot&) const = default;
};

class QueryLayout {
 public:
  static constexpr int kVersion = 1;

  QueryLayout() = default;

  // Balances features across both half-rows.
  static QueryLayout Build(std::span<const std::string> feature_names, int bitwidth,
                           CwParams cw, std::size_t repetition, std::size_t slot_count);

  int bitwidth() const { return bitwidth_; }
  const CwParams& cw() const { return cw_; }
  std::size_t repetition() const { return repetition_; }
  std::size_t gap() const { return gap_; }
  std::size_t slot_count() const { return slot_count_; }
  std::size_t levels() const { return CbtLevels(bitwidth_); }
  const std::vector<FeatureSlot>& features() const { return features_; }
  std::size_t feature_count() const { return features_.size(); }
  std::size_t unit_count() const { return features_.size() * levels(); }

  std::optional<std::size_t> FeatureIndex(std::string_view name) const;
  std::size_t UnitSlot(std::size_t feature, std::size_t level, std::size_t rep) const {
    return features_[feature].start + level + rep * gap_;
  }
  // Ciphertexts per query before (M) and after compression (ceil(M / R)).
  std::size_t plane_count() const { return cw_.length; }
  std::size_t compressed_count() const {
    return (plane_count() + repetition_ - 1) / repetition_;
  }
  // Slots carrying data in an uncompressed plane.
  std::size_t utilized_slots() const { return unit_count() * repetition_; }

  // Throws kLayout when the equal-gap or half-row constraints are broken.
  void Validate() const;

  std::string ToJson() const;
  static QueryLayout FromJson(std::string_view text);

  bool operator==(const QueryLayout&) const = default;

 private:
  int bitwidth_ = 0;
  CwParams cw_;
  std::size_t repetition_ = 1;
  std::size_t gap_ = 0;
  std::size_t slot_count_ = 0;
  std::vector<FeatureSlot> features_;
};

// Quantized client features keyed by name.
using FeatureValues = std::map<std::string, std::uint64_t, std::less<>>;

// dataArrList: plane m, unit u = f * levels + d -> bit m of PE(x_f)[d].
using PlaneData = std::vector<std::vector<std::uint8_t>>;
PlaneData BuildPlaneData(const FeatureValues& values, const QueryLayout& layout);

// Uncompressed repetitive encoding: every unit bit repeated R times.
std::vector<fhe::PlainVector> PackPlanes(const PlaneData& data, const QueryLayout& layout,
                                         const fhe::FheParams& params);
// Compressed encoding: plane m occupies repetition block m mod R of
// compressed vector m / R.
std::vector<fhe::PlainVector> CompressPlanes(const PlaneData& data, const QueryLayout& layout,
                                             const fhe::FheParams& params);

struct CompressedQuery {
  std::vector<fhe::Ciphertext> ciphertexts;
  std::size_t plane_count = 0;
};

std::vector<fhe::Ciphertext> PackQuery(const FeatureValues& values, const QueryLayout& layout,
                                       const fhe::Decryptor& key);
CompressedQuery CompressQuery(const FeatureValues& values, const QueryLayout& layout,
                              const fhe::Decryptor& key);

// Restores the uncompressed planes with masks, row rotations and additions:
// R - 1 rotations and one mask per plane (none at all when R == 1).
std::vector<fhe::Ciphertext> DecompressQuery(std::span<const fhe::Ciphertext> compressed,
                                             const QueryLayout& layout,
                                             const fhe::Evaluator& eval);

}  // namespace treecloak::encoding

#endif  // TREECLOAK_ENCODING_H_
