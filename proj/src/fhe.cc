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

#include "treecloak/fhe.h"

#include <algorithm>
#include <bit>
#include <string>

#include "treecloak/error.h"
#include "treecloak/random.h"

namespace treecloak::fhe {
namespace {

using u128 = unsigned __int128;

}  // namespace

std::uint64_t MulMod(std::uint64_t a, std::uint64_t b, std::uint64_t m) {
  return static_cast<std::uint64_t>(static_cast<u128>(a) * b % m);
}

std::uint64_t PowMod(std::uint64_t base, std::uint64_t exp, std::uint64_t m) {
  std::uint64_t result = 1 % m;
  base %= m;
  while (exp > 0) {
    if (exp & 1) result = MulMod(result, base, m);
    base = MulMod(base, base, m);
    exp >>= 1;
  }
  return result;
}

bool IsPrime(std::uint64_t n) {
  if (n < 2) return false;
  for (std::uint64_t p : {2u, 3u, 5u, 7u, 11u, 13u, 17u, 19u, 23u, 29u, 31u, 37u}) {
    if (n % p == 0) return n == p;
  }
  std::uint64_t d = n - 1;
  int s = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++s;
  }
  // Deterministic Miller-Rabin witnesses for 64-bit inputs.
  for (std::uint64_t a : {2u, 3u, 5u, 7u, 11u, 13u, 17u, 19u, 23u, 29u, 31u, 37u}) {
    std::uint64_t x = PowMod(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int r = 1; r < s; ++r) {
      x = MulMod(x, x, n);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

std::uint64_t SmallestBatchingPrimeAbove(std::uint64_t floor, std::size_t slot_count) {
  const std::uint64_t step = 2 * static_cast<std::uint64_t>(slot_count);
  std::uint64_t candidate = (floor / step + 1) * step + 1;
  while (!IsPrime(candidate)) candidate += step;
  return candidate;
}

FheParams FheParams::Create(std::size_t slot_count, std::uint64_t modulus_floor,
                            int depth_budget) {
  FheParams params;
  params.slot_count = slot_count;
  params.plain_modulus = SmallestBatchingPrimeAbove(modulus_floor, slot_count);
  params.depth_budget = depth_budget;
  params.scaling_factor = 0.0;
  params.Validate();
  return params;
}

void FheParams::Validate() const {
  if (slot_count < 4 || !std::has_single_bit(slot_count)) {
    throw Error(ErrorCode::kInvalidArgument,
                "slot count must be a power of two >= 4, got " + std::to_string(slot_count));
  }
  if (plain_modulus >= (std::uint64_t{1} << 62) || !IsPrime(plain_modulus) ||
      plain_modulus % (2 * slot_count) != 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "plaintext modulus " + std::to_string(plain_modulus) +
                    " is not a batching prime for N=" + std::to_string(slot_count));
  }
  // One weight-2 equality (ceil(log2 2) + 2) plus the leaf product.
  if (depth_budget < 4) {
    throw Error(ErrorCode::kInvalidArgument, "depth budget too small");
  }
}

void FheParams::Serialize(ByteWriter& out) const {
  out.U8(kReferenceBackendTag);
  out.U64(slot_count);
  out.U64(plain_modulus);
  out.U32(static_cast<std::uint32_t>(depth_budget));
  out.F64(scaling_factor);
}

FheParams FheParams::Deserialize(ByteReader& in) {
  if (in.U8() != kReferenceBackendTag) {
    throw Error(ErrorCode::kProtocol, "unknown backend tag in parameters");
  }
  FheParams p;
  p.slot_count = in.U64();
  p.plain_modulus = in.U64();
  p.depth_budget = static_cast<int>(in.U32());
  p.scaling_factor = in.F64();
  p.Validate();
  return p;
}

bool PlainVector::IsZero() const {
  return std::all_of(slots_.begin(), slots_.end(), [](std::uint64_t v) { return v == 0; });
}

PlainVector Encode(const FheParams& params, std::span<const std::int64_t> values) {
  if (values.size() > params.slot_count) {
    throw Error(ErrorCode::kCapacity, std::to_string(values.size()) +
                                          " values exceed " +
                                          std::to_string(params.slot_count) + " slots");
  }
  const auto t = static_cast<std::int64_t>(params.plain_modulus);
  std::vector<std::uint64_t> slots(params.slot_count, 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::int64_t r = values[i] % t;
    if (r < 0) r += t;
    slots[i] = static_cast<std::uint64_t>(r);
  }
  return PlainVector(std::move(slots));
}

PlainVector EncodeUnsigned(const FheParams& params, std::span<const std::uint64_t> values) {
  if (values.size() > params.slot_count) {
    throw Error(ErrorCode::kCapacity, std::to_string(values.size()) +
                                          " values exceed " +
                                          std::to_string(params.slot_count) + " slots");
  }
  std::vector<std::uint64_t> slots(params.slot_count, 0);
  for (std::size_t i = 0; i < values.size(); ++i) slots[i] = values[i] % params.plain_modulus;
  return PlainVector(std::move(slots));
}

std::vector<std::uint64_t> Decode(const PlainVector& plain) {
  return {plain.slots().begin(), plain.slots().end()};
}

std::int64_t DecodeSigned(std::uint64_t slot, std::uint64_t plain_modulus) {
  if (slot > plain_modulus / 2) {
    return -static_cast<std::int64_t>(plain_modulus - slot);
  }
  return static_cast<std::int64_t>(slot);
}

PlainVector ConstantPlain(const FheParams& params, std::uint64_t value) {
  return PlainVector(std::vector<std::uint64_t>(params.slot_count, value % params.plain_modulus));
}

PlainVector ZeroPlain(const FheParams& params) { return ConstantPlain(params, 0); }

LedgerSnapshot LedgerSnapshot::operator-(const LedgerSnapshot& earlier) const {
  LedgerSnapshot d;
  d.row_rotations = row_rotations - earlier.row_rotations;
  d.column_rotations = column_rotations - earlier.column_rotations;
  d.cipher_mults = cipher_mults - earlier.cipher_mults;
  d.plain_mults = plain_mults - earlier.plain_mults;
  d.additions = additions - earlier.additions;
  d.encryptions = encryptions - earlier.encryptions;
  d.decryptions = decryptions - earlier.decryptions;
  d.max_depth = max_depth;
  return d;
}

void OpLedger::ObserveDepth(int depth) {
  int seen = max_depth_.load(std::memory_order_relaxed);
  while (depth > seen &&
         !max_depth_.compare_exchange_weak(seen, depth, std::memory_order_relaxed)) {
  }
}

LedgerSnapshot OpLedger::Snapshot() const {
  LedgerSnapshot s;
  s.row_rotations = row_rotations_.load();
  s.column_rotations = column_rotations_.load();
  s.cipher_mults = cipher_mults_.load();
  s.plain_mults = plain_mults_.load();
  s.additions = additions_.load();
  s.encryptions = encryptions_.load();
  s.decryptions = decryptions_.load();
  s.max_depth = max_depth_.load();
  return s;
}

void PublicKey::Serialize(ByteWriter& out) const {
  params.Serialize(out);
  out.U64(key_id);
}

PublicKey PublicKey::Deserialize(ByteReader& in) {
  PublicKey key;
  key.params = FheParams::Deserialize(in);
  key.key_id = in.U64();
  return key;
}

KeyPair GenerateKeys(const FheParams& params, Csprng& rng) {
  params.Validate();
  std::uint64_t id = 0;
  while (id == 0) id = rng.NextU64();
  return KeyPair{SecretKey{id, params}, PublicKey{id, params}};
}

void Ciphertext::Serialize(ByteWriter& out) const {
  if (!slots_) throw Error(ErrorCode::kInvalidArgument, "serializing empty ciphertext");
  out.U8(kReferenceBackendTag);
  out.U64(key_id_);
  out.U32(static_cast<std::uint32_t>(depth_));
  out.U32(static_cast<std::uint32_t>(slots_->size()));
  for (std::uint64_t v : *slots_) out.U64(v);
}

std::size_t Ciphertext::SerializedSize() const {
  return 1 + 8 + 4 + 4 + 8 * slot_count();
}

Ciphertext Ciphertext::Deserialize(ByteReader& in) {
  if (in.U8() != kReferenceBackendTag) {
    throw Error(ErrorCode::kProtocol, "unknown backend tag in ciphertext");
  }
  const std::uint64_t key_id = in.U64();
  const int depth = static_cast<int>(in.U32());
  const std::uint32_t n = in.U32();
  if (n == 0 || !std::has_single_bit(n)) {
    throw Error(ErrorCode::kProtocol, "bad ciphertext slot count");
  }
  std::vector<std::uint64_t> slots(n);
  for (auto& v : slots) v = in.U64();
  return Ciphertext(std::make_shared<const std::vector<std::uint64_t>>(std::move(slots)),
                    depth, key_id);
}

Evaluator::Evaluator(PublicKey key, std::shared_ptr<OpLedger> ledger)
    : key_(std::move(key)), ledger_(std::move(ledger)) {
  key_.params.Validate();
  if (!ledger_) ledger_ = std::make_shared<OpLedger>();
}

void Evaluator::Check(const Ciphertext& a) const {
  if (!a.valid()) throw Error(ErrorCode::kInvalidArgument, "empty ciphertext");
  if (a.key_id() != key_.key_id) {
    throw Error(ErrorCode::kKeyMismatch, "ciphertext was produced under another key");
  }
  if (a.slot_count() != key_.params.slot_count) {
    throw Error(ErrorCode::kParamMismatch, "ciphertext slot count differs from params");
  }
}

void Evaluator::Check(const PlainVector& p) const {
  if (p.size() != key_.params.slot_count) {
    throw Error(ErrorCode::kParamMismatch, "plaintext slot count differs from params");
  }
}

int Evaluator::NextDepth(int depth) const {
  if (depth + 1 > key_.params.depth_budget) {
    throw Error(ErrorCode::kNoiseBudget,
                "multiplication would reach depth " + std::to_string(depth + 1) +
                    " beyond budget " + std::to_string(key_.params.depth_budget));
  }
  return depth + 1;
}

Ciphertext Evaluator::Make(std::vector<std::uint64_t> slots, int depth) const {
  ledger_->ObserveDepth(depth);
  return Ciphertext(std::make_shared<const std::vector<std::uint64_t>>(std::move(slots)), depth,
                    key_.key_id);
}

Ciphertext Evaluator::Encrypt(const PlainVector& plain) const {
  Check(plain);
  ledger_->CountEncryption();
  return Make({plain.slots().begin(), plain.slots().end()}, 0);
}

Ciphertext Evaluator::Add(const Ciphertext& a, const Ciphertext& b) const {
  Check(a);
  Check(b);
  const std::uint64_t t = key_.params.plain_modulus;
  const auto& x = *a.slots_;
  const auto& y = *b.slots_;
  std::vector<std::uint64_t> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::uint64_t s = x[i] + y[i];
    out[i] = s >= t ? s - t : s;
  }
  ledger_->CountAddition();
  return Make(std::move(out), std::max(a.depth(), b.depth()));
}

Ciphertext Evaluator::Add(const Ciphertext& a, const PlainVector& b) const {
  Check(a);
  Check(b);
  const std::uint64_t t = key_.params.plain_modulus;
  const auto& x = *a.slots_;
  std::vector<std::uint64_t> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::uint64_t s = x[i] + b[i];
    out[i] = s >= t ? s - t : s;
  }
  ledger_->CountAddition();
  return Make(std::move(out), a.depth());
}

Ciphertext Evaluator::Sub(const Ciphertext& a, const Ciphertext& b) const {
  Check(a);
  Check(b);
  const std::uint64_t t = key_.params.plain_modulus;
  const auto& x = *a.slots_;
  const auto& y = *b.slots_;
  std::vector<std::uint64_t> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] >= y[i] ? x[i] - y[i] : x[i] + t - y[i];
  ledger_->CountAddition();
  return Make(std::move(out), std::max(a.depth(), b.depth()));
}

Ciphertext Evaluator::Sub(const Ciphertext& a, const PlainVector& b) const {
  Check(a);
  Check(b);
  const std::uint64_t t = key_.params.plain_modulus;
  const auto& x = *a.slots_;
  std::vector<std::uint64_t> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] >= b[i] ? x[i] - b[i] : x[i] + t - b[i];
  ledger_->CountAddition();
  return Make(std::move(out), a.depth());
}

Ciphertext Evaluator::SubFrom(const PlainVector& plain, const Ciphertext& a) const {
  Check(a);
  Check(plain);
  const std::uint64_t t = key_.params.plain_modulus;
  const auto& x = *a.slots_;
  std::vector<std::uint64_t> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = plain[i] >= x[i] ? plain[i] - x[i] : plain[i] + t - x[i];
  }
  ledger_->CountAddition();
  return Make(std::move(out), a.depth());
}

Ciphertext Evaluator::Negate(const Ciphertext& a) const {
  Check(a);
  const std::uint64_t t = key_.params.plain_modulus;
  const auto& x = *a.slots_;
  std::vector<std::uint64_t> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] == 0 ? 0 : t - x[i];
  ledger_->CountAddition();
  return Make(std::move(out), a.depth());
}

Ciphertext Evaluator::Multiply(const Ciphertext& a, const Ciphertext& b) const {
  Check(a);
  Check(b);
  const int depth = NextDepth(std::max(a.depth(), b.depth()));
  const std::uint64_t t = key_.params.plain_modulus;
  const auto& x = *a.slots_;
  const auto& y = *b.slots_;
  std::vector<std::uint64_t> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = MulMod(x[i], y[i], t);
  ledger_->CountCipherMult();
  return Make(std::move(out), depth);
}

Ciphertext Evaluator::Multiply(const Ciphertext& a, const PlainVector& b) const {
  Check(a);
  Check(b);
  const int depth = NextDepth(a.depth());
  const std::uint64_t t = key_.params.plain_modulus;
  const auto& x = *a.slots_;
  std::vector<std::uint64_t> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = MulMod(x[i], b[i], t);
  ledger_->CountPlainMult();
  return Make(std::move(out), depth);
}

Ciphertext Evaluator::MultiplyMany(std::span<const Ciphertext> factors) const {
  if (factors.empty()) throw Error(ErrorCode::kInvalidArgument, "empty product");
  std::vector<Ciphertext> level(factors.begin(), factors.end());
  while (level.size() > 1) {
    std::vector<Ciphertext> next;
    next.reserve((level.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < level.size(); i += 2) {
      next.push_back(Multiply(level[i], level[i + 1]));
    }
    if (level.size() % 2 == 1) next.push_back(level.back());
    level = std::move(next);
  }
  return level.front();
}

Ciphertext Evaluator::AddMany(std::span<const Ciphertext> terms) const {
  if (terms.empty()) throw Error(ErrorCode::kInvalidArgument, "empty sum");
  Ciphertext acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = Add(acc, terms[i]);
  return acc;
}

Ciphertext Evaluator::RotateRows(const Ciphertext& a, std::size_t steps) const {
  Check(a);
  const std::size_t half = key_.params.row_size();
  if (steps >= half) {
    throw Error(ErrorCode::kOutOfRange, "row rotation " + std::to_string(steps) +
                                            " outside [0, " + std::to_string(half) + ")");
  }
  if (steps == 0) return a;
  const auto& x = *a.slots_;
  std::vector<std::uint64_t> out(x.size());
  for (std::size_t row = 0; row < 2; ++row) {
    const std::size_t base = row * half;
    for (std::size_t i = 0; i < half; ++i) {
      out[base + i] = x[base + (i + steps) % half];
    }
  }
  ledger_->CountRowRotation();
  return Make(std::move(out), a.depth());
}

Ciphertext Evaluator::RotateColumns(const Ciphertext& a) const {
  Check(a);
  const std::size_t half = key_.params.row_size();
  const auto& x = *a.slots_;
  std::vector<std::uint64_t> out(x.size());
  for (std::size_t i = 0; i < half; ++i) {
    out[i] = x[i + half];
    out[i + half] = x[i];
  }
  ledger_->CountColumnRotation();
  return Make(std::move(out), a.depth());
}

Decryptor::Decryptor(SecretKey key, std::shared_ptr<OpLedger> ledger)
    : key_(std::move(key)), ledger_(std::move(ledger)) {
  key_.params.Validate();
  if (!ledger_) ledger_ = std::make_shared<OpLedger>();
}

Ciphertext Decryptor::Encrypt(const PlainVector& plain) const {
  if (plain.size() != key_.params.slot_count) {
    throw Error(ErrorCode::kParamMismatch, "plaintext slot count differs from params");
  }
  ledger_->CountEncryption();
  return Ciphertext(std::make_shared<const std::vector<std::uint64_t>>(plain.slots().begin(),
                                                                       plain.slots().end()),
                    0, key_.key_id);
}

PlainVector Decryptor::Decrypt(const Ciphertext& c) const {
  if (!c.valid()) throw Error(ErrorCode::kInvalidArgument, "empty ciphertext");
  if (c.key_id() != key_.key_id) {
    throw Error(ErrorCode::kKeyMismatch, "ciphertext was encrypted under another key");
  }
  if (c.slot_count() != key_.params.slot_count) {
    throw Error(ErrorCode::kParamMismatch, "ciphertext slot count differs from params");
  }
  if (c.depth() > key_.params.depth_budget) {
    throw Error(ErrorCode::kNoiseBudget, "ciphertext depth exceeds budget");
  }
  ledger_->CountDecryption();
  return PlainVector({c.slots_->begin(), c.slots_->end()});
}

}  // namespace treecloak::fhe
