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

#ifndef TREECLOAK_RANDOM_H_
#define TREECLOAK_RANDOM_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>

namespace treecloak {

// Seedable ChaCha20 stream generator. Production callers seed it from the OS
// (FromEntropy); tests pass a fixed seed for reproducible transcripts.
// Satisfies UniformRandomBitGenerator so it can drive std::shuffle.
class Csprng {
 public:
  using result_type = std::uint64_t;
  static constexpr std::size_t kSeedBytes = 32;

  explicit Csprng(std::uint64_t seed);
  explicit Csprng(const std::array<std::uint8_t, kSeedBytes>& seed);

  static Csprng FromEntropy();

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }
  result_type operator()() { return NextU64(); }

  std::uint64_t NextU64();
  // Uniform in [0, bound). bound must be positive.
  std::uint64_t Uniform(std::uint64_t bound);
  // Uniform in [1, modulus).
  std::uint64_t UniformNonzero(std::uint64_t modulus);
  // Derives an independent generator (e.g. one per query).
  Csprng Fork();

 private:
  void Refill();

  std::array<std::uint8_t, kSeedBytes> key_{};
  std::uint64_t block_counter_ = 0;
  std::array<std::uint8_t, 64> buffer_{};
  std::size_t buffer_pos_ = 64;
};

}  // namespace treecloak

#endif  // TREECLOAK_RANDOM_H_
