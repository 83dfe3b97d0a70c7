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

#include "treecloak/random.h"

#include <sodium.h>

#include <cstring>

#include "treecloak/error.h"

namespace treecloak {
namespace {

void EnsureSodium() {
  static const bool ok = sodium_init() >= 0;
  if (!ok) throw Error(ErrorCode::kIo, "libsodium initialisation failed");
}

}  // namespace

Csprng::Csprng(std::uint64_t seed) {
  EnsureSodium();
  // Expand the 64-bit seed into a full key so nearby seeds give unrelated
  // streams.
  std::uint8_t raw[sizeof(seed)];
  for (std::size_t i = 0; i < sizeof(seed); ++i) raw[i] = (seed >> (8 * i)) & 0xff;
  crypto_generichash(key_.data(), key_.size(), raw, sizeof(raw), nullptr, 0);
}

Csprng::Csprng(const std::array<std::uint8_t, kSeedBytes>& seed) : key_(seed) {
  EnsureSodium();
}

Csprng Csprng::FromEntropy() {
  EnsureSodium();
  std::array<std::uint8_t, kSeedBytes> seed;
  randombytes_buf(seed.data(), seed.size());
  return Csprng(seed);
}

void Csprng::Refill() {
  std::uint8_t nonce[crypto_stream_chacha20_NONCEBYTES];
  static_assert(sizeof(nonce) == sizeof(block_counter_));
  std::memcpy(nonce, &block_counter_, sizeof(nonce));
  ++block_counter_;
  crypto_stream_chacha20(buffer_.data(), buffer_.size(), nonce, key_.data());
  buffer_pos_ = 0;
}

std::uint64_t Csprng::NextU64() {
  if (buffer_pos_ + sizeof(std::uint64_t) > buffer_.size()) Refill();
  std::uint64_t value;
  std::memcpy(&value, buffer_.data() + buffer_pos_, sizeof(value));
  buffer_pos_ += sizeof(value);
  return value;
}

std::uint64_t Csprng::Uniform(std::uint64_t bound) {
  if (bound == 0) throw Error(ErrorCode::kInvalidArgument, "empty sampling range");
  // Rejection sampling: discard the biased tail of the 64-bit range.
  const std::uint64_t limit = max() - (max() % bound + 1) % bound;
  std::uint64_t value;
  do {
    value = NextU64();
  } while (value > limit);
  return value % bound;
}

std::uint64_t Csprng::UniformNonzero(std::uint64_t modulus) {
  if (modulus < 2) throw Error(ErrorCode::kInvalidArgument, "modulus must exceed 1");
  return 1 + Uniform(modulus - 1);
}

Csprng Csprng::Fork() {
  std::array<std::uint8_t, kSeedBytes> seed;
  for (std::size_t i = 0; i < seed.size(); i += 8) {
    const std::uint64_t word = NextU64();
    std::memcpy(seed.data() + i, &word, 8);
  }
  return Csprng(seed);
}

}  // namespace treecloak
