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

#ifndef TREECLOAK_FHE_H_
#define TREECLOAK_FHE_H_

// SIMD homomorphic vector abstraction.
//
// The only backend shipped here is a reference simulator: ciphertexts carry
// their slot vectors in the clear together with key binding and multiplicative
// depth bookkeeping. It enforces the same API, depth and key rules a lattice
// backend would, which makes every protocol step checkable bit-for-bit. It is
// NOT secure and its serialized ciphertexts expose plaintext slots.

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "treecloak/bytes.h"

namespace treecloak {
class Csprng;
}

namespace treecloak::fhe {

inline constexpr std::uint8_t kReferenceBackendTag = 0x01;
inline constexpr int kDefaultDepthBudget = 40;
inline constexpr std::size_t kDefaultSlotCount = std::size_t{1} << 13;
inline constexpr std::uint64_t kDefaultPlainModulusFloor = std::uint64_t{1} << 20;

// a * b mod m and base^exp mod m without overflow.
std::uint64_t MulMod(std::uint64_t a, std::uint64_t b, std::uint64_t m);
std::uint64_t PowMod(std::uint64_t base, std::uint64_t exp, std::uint64_t m);

bool IsPrime(std::uint64_t n);

// Smallest prime p > floor with p == 1 (mod 2 * slot_count).
std::uint64_t SmallestBatchingPrimeAbove(std::uint64_t floor, std::size_t slot_count);

struct FheParams {
  std::size_t slot_count = 0;
  std::uint64_t plain_modulus = 0;
  int depth_budget = 0;
  // Carried for real backends only; the reference backend ignores it.
  double scaling_factor = 0.0;

  static FheParams Create(std::size_t slot_count,
                          std::uint64_t modulus_floor = kDefaultPlainModulusFloor,
                          int depth_budget = kDefaultDepthBudget);
  static FheParams Default() { return Create(kDefaultSlotCount); }

  // Throws kInvalidArgument when N is not a power of two, t is not a batching
  // prime, or the depth budget cannot fit one comparison plus a leaf product.
  void Validate() const;

  std::size_t row_size() const { return slot_count / 2; }

  void Serialize(ByteWriter& out) const;
  static FheParams Deserialize(ByteReader& in);

  bool operator==(const FheParams&) const = default;
};

class PlainVector {
 public:
  PlainVector() = default;
  // Values must already be reduced modulo t.
  explicit PlainVector(std::vector<std::uint64_t> slots) : slots_(std::move(slots)) {}

  std::span<const std::uint64_t> slots() const { return slots_; }
  std::uint64_t operator[](std::size_t i) const { return slots_[i]; }
  std::size_t size() const { return slots_.size(); }
  bool IsZero() const;

  bool operator==(const PlainVector&) const = default;

 private:
  std::vector<std::uint64_t> slots_;
};

// Integer <-> slot encoding. Negative inputs map to t - |v|.
PlainVector Encode(const FheParams& params, std::span<const std::int64_t> values);
PlainVector EncodeUnsigned(const FheParams& params, std::span<const std::uint64_t> values);
std::vector<std::uint64_t> Decode(const PlainVector& plain);
// Centered representative: values above t/2 decode as negative.
std::int64_t DecodeSigned(std::uint64_t slot, std::uint64_t plain_modulus);

struct LedgerSnapshot {
  std::uint64_t row_rotations = 0;
  std::uint64_t column_rotations = 0;
  std::uint64_t cipher_mults = 0;
  std::uint64_t plain_mults = 0;
  std::uint64_t additions = 0;
  std::uint64_t encryptions = 0;
  std::uint64_t decryptions = 0;
  int max_depth = 0;

  std::uint64_t rotations() const { return row_rotations + column_rotations; }
  // Counter deltas; max_depth is taken from the later snapshot.
  LedgerSnapshot operator-(const LedgerSnapshot& earlier) const;
};

// Operation counters shared by every ciphertext produced in one session.
// Counters only ever increase and tolerate concurrent increments.
class OpLedger {
 public:
  void CountRowRotation() { row_rotations_.fetch_add(1, std::memory_order_relaxed); }
  void CountColumnRotation() { column_rotations_.fetch_add(1, std::memory_order_relaxed); }
  void CountCipherMult() { cipher_mults_.fetch_add(1, std::memory_order_relaxed); }
  void CountPlainMult() { plain_mults_.fetch_add(1, std::memory_order_relaxed); }
  void CountAddition() { additions_.fetch_add(1, std::memory_order_relaxed); }
  void CountEncryption() { encryptions_.fetch_add(1, std::memory_order_relaxed); }
  void CountDecryption() { decryptions_.fetch_add(1, std::memory_order_relaxed); }
  void ObserveDepth(int depth);

  LedgerSnapshot Snapshot() const;

 private:
  std::atomic<std::uint64_t> row_rotations_{0};
  std::atomic<std::uint64_t> column_rotations_{0};
  std::atomic<std::uint64_t> cipher_mults_{0};
  std::atomic<std::uint64_t> plain_mults_{0};
  std::atomic<std::uint64_t> additions_{0};
  std::atomic<std::uint64_t> encryptions_{0};
  std::atomic<std::uint64_t> decryptions_{0};
  std::atomic<int> max_depth_{0};
};

// Stands in for the secret key. Only the client holds one.
struct SecretKey {
  std::uint64_t key_id = 0;
  FheParams params;
};

// Public encryption key plus the relinearisation/rotation keys a server needs.
struct PublicKey {
  std::uint64_t key_id = 0;
  FheParams params;

  void Serialize(ByteWriter& out) const;
  static PublicKey Deserialize(ByteReader& in);
};

struct KeyPair {
  SecretKey secret;
  PublicKey public_key;
};

KeyPair GenerateKeys(const FheParams& params, Csprng& rng);

// Immutable encrypted slot vector. Copies share the payload.
class Ciphertext {
 public:
  Ciphertext() = default;

  int depth() const { return depth_; }
  std::uint64_t key_id() const { return key_id_; }
  std::size_t slot_count() const { return slots_ ? slots_->size() : 0; }
  bool valid() const { return slots_ != nullptr; }

  void Serialize(ByteWriter& out) const;
  static Ciphertext Deserialize(ByteReader& in);
  std::size_t SerializedSize() const;

 private:
  friend class Evaluator;
  friend class Decryptor;

  Ciphertext(std::shared_ptr<const std::vector<std::uint64_t>> slots, int depth,
             std::uint64_t key_id)
      : slots_(std::move(slots)), depth_(depth), key_id_(key_id) {}

  std::shared_ptr<const std::vector<std::uint64_t>> slots_;
  int depth_ = 0;
  std::uint64_t key_id_ = 0;
};

// Homomorphic operations available to anyone holding the public key.
// All methods are const and thread-safe; the ledger is the shared state.
class Evaluator {
 public:
  Evaluator(PublicKey key, std::shared_ptr<OpLedger> ledger);

  const FheParams& params() const { return key_.params; }
  const PublicKey& public_key() const { return key_; }
  OpLedger& ledger() const { return *ledger_; }
  std::shared_ptr<OpLedger> shared_ledger() const { return ledger_; }

  Ciphertext Encrypt(const PlainVector& plain) const;

  Ciphertext Add(const Ciphertext& a, const Ciphertext& b) const;
  Ciphertext Add(const Ciphertext& a, const PlainVector& b) const;
  Ciphertext Sub(const Ciphertext& a, const Ciphertext& b) const;
  Ciphertext Sub(const Ciphertext& a, const PlainVector& b) const;
  // plain - a
  Ciphertext SubFrom(const PlainVector& plain, const Ciphertext& a) const;
  Ciphertext Negate(const Ciphertext& a) const;

  // Both multiplications add one level of depth.
  Ciphertext Multiply(const Ciphertext& a, const Ciphertext& b) const;
  Ciphertext Multiply(const Ciphertext& a, const PlainVector& b) const;
  // Balanced product tree; depth grows by ceil(log2(k)).
  Ciphertext MultiplyMany(std::span<const Ciphertext> factors) const;

  // Rotates each half-row left by `steps`, 0 <= steps < N/2. A zero step is a
  // no-op and is not counted.
  Ciphertext RotateRows(const Ciphertext& a, std::size_t steps) const;
  // Swaps the two half-rows.
  Ciphertext RotateColumns(const Ciphertext& a) const;

  Ciphertext AddMany(std::span<const Ciphertext> terms) const;

 private:
  void Check(const Ciphertext& a) const;
  void Check(const PlainVector& p) const;
  Ciphertext Make(std::vector<std::uint64_t> slots, int depth) const;
  int NextDepth(int depth) const;

  PublicKey key_;
  std::shared_ptr<OpLedger> ledger_;
};

// Secret-key operations. Only the client constructs one.
class Decryptor {
 public:
  Decryptor(SecretKey key, std::shared_ptr<OpLedger> ledger);

  const FheParams& params() const { return key_.params; }
  Ciphertext Encrypt(const PlainVector& plain) const;
  PlainVector Decrypt(const Ciphertext& c) const;

 private:
  SecretKey key_;
  std::shared_ptr<OpLedger> ledger_;
};

// Convenience constructors for common plaintexts.
PlainVector ConstantPlain(const FheParams& params, std::uint64_t value);
PlainVector ZeroPlain(const FheParams& params);

}  // namespace treecloak::fhe

#endif  // TREECLOAK_FHE_H_
