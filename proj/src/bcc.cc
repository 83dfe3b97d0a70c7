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

#include "treecloak/bcc.h"

#include <algorithm>
#include <bit>
#include <string>

#include "treecloak/error.h"
#include "treecloak/random.h"

namespace treecloak::bcc {

FrequencyProfile FrequencyProfile::Balanced(std::size_t body_size, std::size_t slot_count) {
  FrequencyProfile p{slot_count, body_size, body_size / 2, body_size - body_size / 2};
  p.Validate();
  return p;
}

void FrequencyProfile::Validate() const {
  if (!std::has_single_bit(slot_count) || !std::has_single_bit(body_size) || body_size < 2 ||
      body_size > slot_count / 2) {
    throw Error(ErrorCode::kInvalidArgument,
                "profile body size " + std::to_string(body_size) + " must be a power of two in [2, N/2]");
  }
  if (zeros + randoms != body_size) {
    throw Error(ErrorCode::kInvalidArgument, "profile counts do not sum to the body size");
  }
}

ShuffleRecord::ShuffleRecord(std::size_t slot_count, std::size_t used,
                             std::vector<std::size_t> final_of)
    : used_(used), final_of_(std::move(final_of)), origin_of_(slot_count, kPaddingOrigin) {
  for (std::size_t i = 0; i < final_of_.size(); ++i) {
    if (final_of_[i] >= slot_count || origin_of_[final_of_[i]] != kPaddingOrigin) {
      throw Error(ErrorCode::kState, "shuffle record is not a permutation");
    }
    origin_of_[final_of_[i]] = i;
  }
  for (auto& o : origin_of_) {
    if (o != kPaddingOrigin && o >= used_) o = kPaddingOrigin;
  }
}

std::size_t ShuffleRecord::Forward(std::size_t i) const {
  if (i >= final_of_.size()) throw Error(ErrorCode::kOutOfRange, "body slot out of range");
  return final_of_[i];
}

std::size_t ShuffleRecord::Unshuffle(std::size_t slot) const {
  if (slot >= origin_of_.size()) throw Error(ErrorCode::kOutOfRange, "slot out of range");
  return origin_of_[slot];
}

std::vector<std::size_t> ShuffleRecord::Positions() const {
  return {final_of_.begin(), final_of_.begin() + static_cast<std::ptrdiff_t>(used_)};
}

fhe::Ciphertext PadToProfile(const fhe::Ciphertext& c, std::size_t used, std::size_t zeros,
                             std::size_t randoms, const FrequencyProfile& profile,
                             const fhe::Evaluator& eval, Csprng& rng) {
  profile.Validate();
  if (profile.slot_count != eval.params().slot_count) {
    throw Error(ErrorCode::kParamMismatch, "profile slot count differs from parameters");
  }
  if (zeros + randoms != used) throw Error(ErrorCode::kInvalidArgument, "class counts do not sum to used slots");
  if (zeros > profile.zeros || randoms > profile.randoms) {
    throw Error(ErrorCode::kCapacity, "input class counts exceed the frequency profile");
  }
  std::vector<std::uint64_t> pad;
  pad.insert(pad.end(), profile.zeros - zeros, 0);
  for (std::size_t i = 0; i < profile.randoms - randoms; ++i) {
    pad.push_back(rng.UniformNonzero(eval.params().plain_modulus));
  }
  if (pad.empty()) return c;
  std::shuffle(pad.begin(), pad.end(), rng);
  std::vector<std::uint64_t> slots(profile.slot_count, 0);
  std::copy(pad.begin(), pad.end(), slots.begin() + static_cast<std::ptrdiff_t>(used));
  return eval.Add(c, fhe::PlainVector(std::move(slots)));
}

fhe::Ciphertext Replicate(const fhe::Ciphertext& c, std::size_t body_size,
                          const fhe::Evaluator& eval) {
  const std::size_t n = eval.params().slot_count;
  const std::size_t half = eval.params().row_size();
  if (!std::has_single_bit(body_size) || body_size > n) {
    throw Error(ErrorCode::kInvalidArgument, "body size must be a power of two no larger than N");
  }
  if (body_size == n) return c;
  fhe::Ciphertext out = c;
  for (std::size_t filled = body_size; filled < half; filled *= 2) {
    out = eval.Add(out, eval.RotateRows(out, half - filled));
  }
  return eval.Add(out, eval.RotateColumns(out));
}

std::size_t ApplyShuffleRound(std::span<std::size_t> positions, std::size_t step, std::size_t r1,
                              std::size_t r2, std::size_t body_size) {
  const std::size_t n = body_size;
  // Keep the two interleaves on opposite parities of bit `step`.
  if ((r1 + r2) % (2 * step) != 0) r2 = (r2 + step) % n;
  std::vector<std::uint8_t> written(n, 0);
  for (auto& p : positions) {
    p = (p + n - (((p / step) & 1) ? r1 : r2)) % n;
    if (written[p]++) throw Error(ErrorCode::kState, "shuffle round wrote a slot twice");
  }
  return r2;
}

ShuffleResult BlindShuffle(const fhe::Ciphertext& replicated, const FrequencyProfile& profile,
                           std::size_t used, const fhe::Evaluator& eval, Csprng& rng) {
  profile.Validate();
  const auto& params = eval.params();
  if (profile.slot_count != params.slot_count) {
    throw Error(ErrorCode::kParamMismatch, "profile slot count differs from parameters");
  }
  const std::size_t n = profile.body_size;
  const std::size_t slots = params.slot_count;
  if (used > n) throw Error(ErrorCode::kInvalidArgument, "used slots exceed the body");

  std::vector<std::size_t> pos(n);
  for (std::size_t i = 0; i < n; ++i) pos[i] = i;

  fhe::Ciphertext c = replicated;
  std::size_t rounds = 0;
  for (std::size_t step = 1; step < n; step *= 2, ++rounds) {
    std::vector<std::uint64_t> m1(slots), m2(slots);
    for (std::size_t i = 0; i < slots; ++i) m1[i] = (i / step) & 1;
    for (std::size_t i = 0; i < slots; ++i) m2[i] = m1[(i + step) % slots];
    const fhe::Ciphertext p1 = eval.Multiply(c, fhe::PlainVector(m1));
    const fhe::Ciphertext p2 = eval.Multiply(c, fhe::PlainVector(m2));

    const std::size_t r1 = step * rng.Uniform(n / step);
    const std::size_t r2 = ApplyShuffleRound(pos, step, r1, step * rng.Uniform(n / step), n);
    c = eval.Add(eval.RotateRows(p1, r1), eval.RotateRows(p2, r2));
  }

  std::vector<std::uint64_t> body_mask(slots, 0);
  std::fill(body_mask.begin(), body_mask.begin() + static_cast<std::ptrdiff_t>(n), 1);
  c = eval.Multiply(c, fhe::PlainVector(std::move(body_mask)));

  std::vector<std::uint64_t> tail(profile.tail_zeros(), 0);
  for (std::size_t i = 0; i < profile.tail_randoms(); ++i) {
    tail.push_back(rng.UniformNonzero(params.plain_modulus));
  }
  if (!tail.empty()) {
    std::shuffle(tail.begin(), tail.end(), rng);
    std::vector<std::uint64_t> tail_slots(slots, 0);
    std::copy(tail.begin(), tail.end(), tail_slots.begin() + static_cast<std::ptrdiff_t>(n));
    c = eval.Add(c, fhe::PlainVector(std::move(tail_slots)));
  }
  return {c, ShuffleRecord(slots, used, std::move(pos)), rounds};
}

ShuffleResult Conceal(const fhe::Ciphertext& c, std::size_t used, std::size_t zeros,
                      std::size_t randoms, const FrequencyProfile& profile,
                      const fhe::Evaluator& eval, Csprng& rng) {
  const fhe::Ciphertext padded = PadToProfile(c, used, zeros, randoms, profile, eval, rng);
  return BlindShuffle(Replicate(padded, profile.body_size, eval), profile, used, eval, rng);
}

fhe::Ciphertext ClientConvert(const fhe::Ciphertext& shuffled, const fhe::Decryptor& key) {
  const auto slots = fhe::Decode(key.Decrypt(shuffled));
  std::vector<std::uint64_t> out(slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i) out[i] = slots[i] == 0 ? 1 : 0;
  return key.Encrypt(fhe::PlainVector(std::move(out)));
}

}  // namespace treecloak::bcc
