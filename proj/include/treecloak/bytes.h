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

#ifndef TREECLOAK_BYTES_H_
#define TREECLOAK_BYTES_H_

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "treecloak/error.h"

namespace treecloak {

using Bytes = std::vector<std::uint8_t>;

// Little-endian writer used by every serialized structure.
class ByteWriter {
 public:
  void U8(std::uint8_t v) { out_.push_back(v); }
  void U32(std::uint32_t v) { Le(v); }
  void U64(std::uint64_t v) { Le(v); }
  void F64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    Le(bits);
  }
  void Raw(std::span<const std::uint8_t> data) {
    out_.insert(out_.end(), data.begin(), data.end());
  }
  // u32 length followed by the bytes.
  void Blob(std::span<const std::uint8_t> data) {
    U32(static_cast<std::uint32_t>(data.size()));
    Raw(data);
  }
  void String(std::string_view s) {
    Blob({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
  }

  const Bytes& bytes() const& { return out_; }
  Bytes&& bytes() && { return std::move(out_); }

 private:
  template <typename T>
  void Le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }

  Bytes out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t U8() { return Le<std::uint8_t>(); }
  std::uint32_t U32() { return Le<std::uint32_t>(); }
  std::uint64_t U64() { return Le<std::uint64_t>(); }
  double F64() {
    const std::uint64_t bits = Le<std::uint64_t>();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  std::span<const std::uint8_t> Raw(std::size_t n) {
    Need(n);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::span<const std::uint8_t> Blob() { return Raw(U32()); }
  std::string String() {
    auto b = Blob();
    return {reinterpret_cast<const char*>(b.data()), b.size()};
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  void ExpectEnd() const {
    if (remaining() != 0) {
      throw Error(ErrorCode::kProtocol, "trailing bytes after message body");
    }
  }

 private:
  void Need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw Error(ErrorCode::kProtocol, "truncated byte stream");
    }
  }
  template <typename T>
  T Le() {
    Need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<T>(data_[pos_ + i]) << (8 * i));
    }
    pos_ += sizeof(T);
    return v;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace treecloak

#endif  // TREECLOAK_BYTES_H_
