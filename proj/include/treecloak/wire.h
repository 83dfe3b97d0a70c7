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

#ifndef TREECLOAK_WIRE_H_
#define TREECLOAK_WIRE_H_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <utility>

#include "treecloak/bytes.h"

namespace treecloak::wire {

// Frame: [u32 BE length][u8 version][u8 type][u64 BE query_id][payload]
// [u32 BE CRC32]. The length counts everything after itself; the CRC covers
// version through payload.
inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::size_t kFrameOverhead = 4 + 1 + 1 + 8 + 4;
inline constexpr std::uint32_t kMaxFrameLength = std::uint32_t{1} << 30;

enum class MessageType : std::uint8_t {
  kSetupRequest = 1,
  kSetupResponse = 2,
  kQuery = 3,
  kBccChallenge = 4,
  kBccResponse = 5,
  kResult = 6,
  kError = 7,
};

std::string_view MessageTypeName(MessageType type);

struct Frame {
  MessageType type = MessageType::kError;
  std::uint64_t query_id = 0;
  Bytes payload;
};

Bytes EncodeFrame(const Frame& frame);
// Throws kProtocol on malformed input and kChecksum on a CRC mismatch.
Frame DecodeFrame(std::span<const std::uint8_t> bytes);
// Length announced by the first four bytes of an encoded frame.
std::uint32_t FrameLength(std::span<const std::uint8_t> prefix);

// Bidirectional stream of whole encoded frames.
class Channel {
 public:
  virtual ~Channel() = default;
  virtual void Send(const Bytes& frame) = 0;
  // Blocks for the next frame; throws kIo once the peer has closed.
  virtual Bytes Receive() = 0;
  virtual void Close() = 0;
};

// Two connected in-process endpoints.
struct ChannelPair {
  std::unique_ptr<Channel> client;
  std::unique_ptr<Channel> server;
};
ChannelPair MakeInProcessPair();

class TcpChannel : public Channel {
 public:
  explicit TcpChannel(int fd) : fd_(fd) {}
  ~TcpChannel() override;
  TcpChannel(const TcpChannel&) = delete;
  TcpChannel& operator=(const TcpChannel&) = delete;

  void Send(const Bytes& frame) override;
  Bytes Receive() override;
  void Close() override;

 private:
  int fd_ = -1;
};

class TcpListener {
 public:
  // Port 0 picks an ephemeral port.
  TcpListener(const std::string& host, std::uint16_t port);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  std::unique_ptr<TcpChannel> Accept();
  void Close();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

std::unique_ptr<TcpChannel> TcpConnect(const std::string& host, std::uint16_t port);

// "host:port" -> parts; throws kInvalidArgument.
std::pair<std::string, std::uint16_t> ParseEndpoint(std::string_view endpoint);

}  // namespace treecloak::wire

#endif  // TREECLOAK_WIRE_H_
