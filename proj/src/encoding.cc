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

#include "treecloak/encoding.h"

#include <algorithm>
#include <limits>

#include "json.hpp"
#include "treecloak/error.h"

namespace treecloak::encoding {
namespace {

using u128 = unsigned __int128;
constexpr std::uint64_t kSaturated = std::numeric_limits<std::uint64_t>::max();

void CheckBitwidth(int bitwidth) {
  if (bitwidth < 1 || bitwidth > 32) {
    throw Error(ErrorCode::kInvalidArgument,
                "bitwidth must be in [1, 32], got " + std::to_string(bitwidth));
  }
}

}  // namespace

std::uint64_t Binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  u128 result = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    // result * (n - k + i) / i stays integral at every step.
    result = result * (n - k + i) / i;
    if (result > kSaturated) return kSaturated;
  }
  return static_cast<std::uint64_t>(result);
}

CwParams CwParams::ForAlphabet(std::uint64_t alphabet, std::size_t weight) {
  if (weight == 0) throw Error(ErrorCode::kInvalidArgument, "codeword weight must be positive");
  CwParams cw{weight, weight};
  while (cw.codebook_size() < alphabet) ++cw.length;
  return cw;
}

CwParams CwParams::ForBitwidth(int bitwidth, std::optional<std::size_t> weight) {
  CheckBitwidth(bitwidth);
  const std::size_t h = weight.value_or(bitwidth > 16 ? 4 : 2);
  return ForAlphabet(std::uint64_t{1} << bitwidth, h);
}

std::size_t CwCodeword::weight() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

std::string CwCodeword::ToString() const {
  std::string s;
  s.reserve(bits_.size());
  for (auto b : bits_) s.push_back(b ? '1' : '0');
  return s;
}

CwCodeword CwCodeword::FromString(std::string_view text) {
  std::vector<std::uint8_t> bits;
  bits.reserve(text.size());
  for (char c : text) {
    if (c != '0' && c != '1') throw Error(ErrorCode::kInvalidArgument, "codeword must be binary");
    bits.push_back(c == '1');
  }
  return CwCodeword(std::move(bits));
}

CwCodeword CwEncode(std::uint64_t value, const CwParams& cw) {
  if (value >= cw.codebook_size()) {
    throw Error(ErrorCode::kOutOfRange,
                "value " + std::to_string(value) + " outside codebook of size " +
                    std::to_string(cw.codebook_size()));
  }
  std::vector<std::uint8_t> bits(cw.length, 0);
  std::size_t remaining = cw.weight;
  for (std::size_t pos = 0; pos < cw.length && remaining > 0; ++pos) {
    // Subsets whose smallest remaining element is `pos`.
    const std::uint64_t with_pos = Binomial(cw.length - pos - 1, remaining - 1);
    if (value < with_pos) {
      bits[pos] = 1;
      --remaining;
    } else {
      value -= with_pos;
    }
  }
  return CwCodeword(std::move(bits));
}

std::uint64_t CwRank(const CwCodeword& word) {
  std::uint64_t rank = 0;
  std::size_t remaining = word.weight();
  const std::size_t n = word.length();
  for (std::size_t pos = 0; pos < n && remaining > 0; ++pos) {
    if (word.bit(pos)) {
      --remaining;
    } else {
      rank += Binomial(n - pos - 1, remaining - 1);
    }
  }
  return rank;
}

std::size_t CbtLevels(int bitwidth) {
  CheckBitwidth(bitwidth);
  return static_cast<std::size_t>(bitwidth) + 1;
}

std::uint64_t CbtMaxValue(int bitwidth) {
  CheckBitwidth(bitwidth);
  return (std::uint64_t{1} << bitwidth) - 1;
}

PeVector PeEncode(std::uint64_t value, int bitwidth, const CwParams& cw) {
  if (value > CbtMaxValue(bitwidth)) {
    throw Error(ErrorCode::kOutOfRange, "value " + std::to_string(value) + " exceeds " +
                                            std::to_string(bitwidth) + "-bit range");
  }
  PeVector pe;
  pe.reserve(CbtLevels(bitwidth));
  for (int d = 0; d <= bitwidth; ++d) pe.push_back(CwEncode(value >> (bitwidth - d), cw));
  return pe;
}

ReVector ReEncode(std::uint64_t value, int bitwidth, const CwParams& cw) {
  if (value > CbtMaxValue(bitwidth)) {
    throw Error(ErrorCode::kOutOfRange, "value " + std::to_string(value) + " exceeds " +
                                            std::to_string(bitwidth) + "-bit range");
  }
  ReVector re(CbtLevels(bitwidth));
  // Walk the path of `value`; wherever it turns left, the right sibling covers
  // only larger leaves.
  for (int d = 1; d <= bitwidth; ++d) {
    const std::uint64_t node = value >> (bitwidth - d);
    if ((node & 1) == 0) re[d] = CwEncode(node | 1, cw);
  }
  return re;
}

QueryLayout QueryLayout::Build(std::span<const std::string> feature_names, int bitwidth,
                               CwParams cw, std::size_t repetition, std::size_t slot_count) {
  QueryLayout layout;
  layout.bitwidth_ = bitwidth;
  layout.cw_ = cw;
  layout.repetition_ = repetition;
  layout.slot_count_ = slot_count;
  const std::size_t levels = CbtLevels(bitwidth);
  const std::size_t half = slot_count / 2;
  std::size_t used[2] = {0, 0};
  for (const auto& name : feature_names) {
    const int row = used[1] < used[0] ? 1 : 0;
    layout.features_.push_back({name, row * half + used[row]});
    used[row] += levels;
  }
  layout.gap_ = std::max<std::size_t>(1, std::max(used[0], used[1]));
  layout.Validate();
  return layout;
}

std::optional<std::size_t> QueryLayout::FeatureIndex(std::string_view name) const {
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (features_[i].name == name) return i;
  }
  return std::nullopt;
}

void QueryLayout::Validate() const {
  CheckBitwidth(bitwidth_);
  if (slot_count_ < 4 || (slot_count_ & (slot_count_ - 1)) != 0) {
    throw Error(ErrorCode::kLayout, "slot count must be a power of two");
  }
  if (repetition_ == 0) throw Error(ErrorCode::kLayout, "repetition must be positive");
  if (cw_.weight == 0 || cw_.codebook_size() < (std::uint64_t{1} << bitwidth_)) {
    throw Error(ErrorCode::kLayout, "codeword parameters cannot label every leaf");
  }
  const std::size_t half = slot_count_ / 2;
  if (gap_ == 0 || gap_ * repetition_ > half) {
    throw Error(ErrorCode::kCapacity,
                std::to_string(features_.size()) + " features x " +
                    std::to_string(repetition_) + " repetitions do not fit " +
                    std::to_string(slot_count_) + " slots");
  }
  std::vector<std::uint8_t> taken(half * 2, 0);
  for (const auto& f : features_) {
    const std::size_t local = f.start % half;
    if (f.start >= slot_count_ || local + levels() > gap_) {
      throw Error(ErrorCode::kLayout, "feature '" + f.name + "' leaves its repetition block");
    }
    for (std::size_t d = 0; d < levels(); ++d) {
      if (taken[f.start + d]++) {
        throw Error(ErrorCode::kLayout, "feature '" + f.name + "' overlaps another feature");
      }
    }
  }
}

std::string QueryLayout::ToJson() const {
  nlohmann::json doc;
  doc["version"] = kVersion;
  doc["bitwidth"] = bitwidth_;
  doc["cw_length"] = cw_.length;
  doc["cw_weight"] = cw_.weight;
  doc["repetition"] = repetition_;
  doc["gap"] = gap_;
  doc["slot_count"] = slot_count_;
  doc["cbt_levels"] = levels();
  auto& features = doc["features"] = nlohmann::json::array();
  for (const auto& f : features_) features.push_back({{"name", f.name}, {"start", f.start}});
  return doc.dump();
}

QueryLayout QueryLayout::FromJson(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    if (doc.at("version").get<int>() != kVersion) {
      throw Error(ErrorCode::kLayout, "unsupported layout version");
    }
    QueryLayout layout;
    layout.bitwidth_ = doc.at("bitwidth").get<int>();
    layout.cw_.length = doc.at("cw_length").get<std::size_t>();
    layout.cw_.weight = doc.at("cw_weight").get<std::size_t>();
    layout.repetition_ = doc.at("repetition").get<std::size_t>();
    layout.gap_ = doc.at("gap").get<std::size_t>();
    layout.slot_count_ = doc.at("slot_count").get<std::size_t>();
    for (const auto& f : doc.at("features")) {
      layout.features_.push_back({f.at("name").get<std::string>(), f.at("start").get<std::size_t>()});
    }
    layout.Validate();
    return layout;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kLayout, std::string("malformed layout document: ") + e.what());
  }
}

PlaneData BuildPlaneData(const FeatureValues& values, const QueryLayout& layout) {
  const std::size_t levels = layout.levels();
  PlaneData data(layout.plane_count(), std::vector<std::uint8_t>(layout.unit_count(), 0));
  for (std::size_t f = 0; f < layout.feature_count(); ++f) {
    const auto& name = layout.features()[f].name;
    const auto it = values.find(name);
    if (it == values.end()) throw Error(ErrorCode::kInvalidArgument, "missing feature '" + name + "'");
    const PeVector pe = PeEncode(it->second, layout.bitwidth(), layout.cw());
    for (std::size_t d = 0; d < levels; ++d) {
      for (std::size_t m = 0; m < layout.plane_count(); ++m) data[m][f * levels + d] = pe[d].bit(m);
    }
  }
  return data;
}

namespace {

void CheckPlaneData(const PlaneData& data, const QueryLayout& layout,
                    const fhe::FheParams& params) {
  if (params.slot_count != layout.slot_count()) {
    throw Error(ErrorCode::kLayout, "layout slot count differs from parameters");
  }
  for (const auto& plane : data) {
    if (plane.size() != layout.unit_count()) {
      throw Error(ErrorCode::kLayout, "plane width differs from layout unit count");
    }
  }
}

}  // namespace

std::vector<fhe::PlainVector> PackPlanes(const PlaneData& data, const QueryLayout& layout,
                                         const fhe::FheParams& params) {
  CheckPlaneData(data, layout, params);
  const std::size_t levels = layout.levels();
  std::vector<fhe::PlainVector> out;
  out.reserve(data.size());
  for (const auto& plane : data) {
    std::vector<std::uint64_t> slots(params.slot_count, 0);
    for (std::size_t f = 0; f < layout.feature_count(); ++f) {
      for (std::size_t d = 0; d < levels; ++d) {
        for (std::size_t r = 0; r < layout.repetition(); ++r) {
          slots[layout.UnitSlot(f, d, r)] = plane[f * levels + d];
        }
      }
    }
    out.emplace_back(std::move(slots));
  }
  return out;
}

std::vector<fhe::PlainVector> CompressPlanes(const PlaneData& data, const QueryLayout& layout,
                                             const fhe::FheParams& params) {
  CheckPlaneData(data, layout, params);
  const std::size_t levels = layout.levels();
  const std::size_t rep = layout.repetition();
  std::vector<std::vector<std::uint64_t>> compressed;
  for (std::size_t m = 0; m < data.size(); ++m) {
    const std::size_t repeat_count = m % rep;
    if (repeat_count == 0) compressed.emplace_back(params.slot_count, 0);
    auto& target = compressed.back();
    for (std::size_t f = 0; f < layout.feature_count(); ++f) {
      for (std::size_t d = 0; d < levels; ++d) {
        target[layout.UnitSlot(f, d, repeat_count)] = data[m][f * levels + d];
      }
    }
  }
  std::vector<fhe::PlainVector> out;
  out.reserve(compressed.size());
  for (auto& slots : compressed) out.emplace_back(std::move(slots));
  return out;
}

std::vector<fhe::Ciphertext> PackQuery(const FeatureValues& values, const QueryLayout& layout,
                                       const fhe::Decryptor& key) {
  std::vector<fhe::Ciphertext> out;
  for (const auto& plain : PackPlanes(BuildPlaneData(values, layout), layout, key.params())) {
    out.push_back(key.Encrypt(plain));
  }
  return out;
}

CompressedQuery CompressQuery(const FeatureValues& values, const QueryLayout& layout,
                              const fhe::Decryptor& key) {
  CompressedQuery query;
  query.plane_count = layout.plane_count();
  for (const auto& plain : CompressPlanes(BuildPlaneData(values, layout), layout, key.params())) {
    query.ciphertexts.push_back(key.Encrypt(plain));
  }
  return query;
}

std::vector<fhe::Ciphertext> DecompressQuery(std::span<const fhe::Ciphertext> compressed,
                                             const QueryLayout& layout,
                                             const fhe::Evaluator& eval) {
  if (compressed.size() != layout.compressed_count()) {
    throw Error(ErrorCode::kLayout, "expected " + std::to_string(layout.compressed_count()) +
                                        " compressed ciphertexts, got " +
                                        std::to_string(compressed.size()));
  }
  if (eval.params().slot_count != layout.slot_count()) {
    throw Error(ErrorCode::kLayout, "layout slot count differs from parameters");
  }
  const std::size_t rep = layout.repetition();
  if (rep == 1) return {compressed.begin(), compressed.end()};

  const std::size_t half = layout.slot_count() / 2;
  const std::size_t gap = layout.gap();
  std::vector<fhe::PlainVector> block_masks;
  for (std::size_t k = 0; k < rep; ++k) {
    std::vector<std::uint64_t> mask(layout.slot_count(), 0);
    for (std::size_t f = 0; f < layout.feature_count(); ++f) {
      for (std::size_t d = 0; d < layout.levels(); ++d) mask[layout.UnitSlot(f, d, k)] = 1;
    }
    block_masks.emplace_back(std::move(mask));
  }

  std::vector<fhe::Ciphertext> planes;
  planes.reserve(layout.plane_count());
  for (std::size_t m = 0; m < layout.plane_count(); ++m) {
    const std::size_t k = m % rep;
    const fhe::Ciphertext block = eval.Multiply(compressed[m / rep], block_masks[k]);
    fhe::Ciphertext plane = block;
    for (std::size_t j = 0; j < rep; ++j) {
      if (j == k) continue;
      // Block k moves to block j; the masked-out remainder is zero, so wrapped
      // slots carry nothing.
      const std::size_t steps = j < k ? (k - j) * gap : half - (j - k) * gap;
      plane = eval.Add(plane, eval.RotateRows(block, steps));
    }
    planes.push_back(std::move(plane));
  }
  return planes;
}

}  // namespace treecloak::encoding
