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

#ifndef TREECLOAK_BCC_H_
#define TREECLOAK_BCC_H_

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "treecloak/fhe.h"

namespace treecloak {
class Csprng;
}

namespace treecloak::bcc {

// Slot counts a padded body of length n must show: `zeros` zero slots and
// `randoms` nonzero random slots, plus proportional counts in the N - n tail.
struct FrequencyProfile {
  std::size_t slot_count = 0;
  std::size_t body_size = 0;
  std::size_t zeros = 0;
  std::size_t randoms = 0;

  // f_zero = f_random = n / 2.
  static FrequencyProfile Balanced(std::size_t body_size, std::size_t slot_count);

  std::size_t copies() const { return slot_count / body_size; }
  std::size_t tail_zeros() const { return zeros * (copies() - 1); }
  std::size_t tail_randoms() const { return randoms * (copies() - 1); }
  std::size_t total_zeros() const { return zeros * copies(); }
  std::size_t total_randoms() const { return randoms * copies(); }

  // n a power of two in [2, N/2] and zeros + randoms == n.
  void Validate() const;

  bool operator==(const FrequencyProfile&) const = default;
};

inline constexpr std::size_t kPaddingOrigin = std::numeric_limits<std::size_t>::max();

// Where every body slot went. Slots at or beyond `used` in the body, and the
// whole tail, are padding.
class ShuffleRecord {
 public:
  ShuffleRecord() = default;
  ShuffleRecord(std::size_t slot_count, std::size_t used, std::vector<std::size_t> final_of);

  std::size_t slot_count() const { return origin_of_.size(); }
  std::size_t body_size() const { return final_of_.size(); }
  std::size_t used() const { return used_; }

  // Final slot of body slot i.
  std::size_t Forward(std::size_t i) const;
  // Body slot that landed in `slot`, or kPaddingOrigin.
  std::size_t Unshuffle(std::size_t slot) const;
  // Forward() over [0, used).
  std::vector<std::size_t> Positions() const;

 private:
  std::size_t used_ = 0;
  std::vector<std::size_t> final_of_;
  std::vector<std::size_t> origin_of_;
};

// Fills body slots [used, n) with pad values so the body reaches the profile
// counts. `zeros` and `randoms` are the input's own class counts.
fhe::Ciphertext PadToProfile(const fhe::Ciphertext& c, std::size_t used, std::size_t zeros,
                             std::size_t randoms, const FrequencyProfile& profile,
                             const fhe::Evaluator& eval, Csprng& rng);

// Repeats the first n slots across all N slots with log2(N / n) rotations.
// Slots outside the body must be zero.
fhe::Ciphertext Replicate(const fhe::Ciphertext& c, std::size_t body_size,
                          const fhe::Evaluator& eval);

// One shuffle round in the clear: body positions with bit `step` set move
// left by r1, the others by r2, after the collision guard has adjusted r2.
// Returns the adjusted r2; throws kState if two elements collide.
std::size_t ApplyShuffleRound(std::span<std::size_t> positions, std::size_t step, std::size_t r1,
                              std::size_t r2, std::size_t body_size);

struct ShuffleResult {
  fhe::Ciphertext ciphertext;
  ShuffleRecord record;
  std::size_t rounds = 0;
};

// Log-round rotate-and-merge shuffle of a replicated body, followed by
// masking to the body and a shuffled plaintext tail that restores the
// profile's totals over all N slots.
ShuffleResult BlindShuffle(const fhe::Ciphertext& replicated, const FrequencyProfile& profile,
                           std::size_t used, const fhe::Evaluator& eval, Csprng& rng);

// Pad, replicate and shuffle in one call.
ShuffleResult Conceal(const fhe::Ciphertext& c, std::size_t used, std::size_t zeros,
                      std::size_t randoms, const FrequencyProfile& profile,
                      const fhe::Evaluator& eval, Csprng& rng);

// Client side: zero slots become 1, everything else 0, freshly encrypted.
fhe::Ciphertext ClientConvert(const fhe::Ciphertext& shuffled, const fhe::Decryptor& key);

}  // namespace treecloak::bcc

#endif  // TREECLOAK_BCC_H_
