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

#include "treecloak/wire.h"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>
#include <zlib.h>

#include <cerrno>
#include <charconv>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>

#include "treecloak/error.h"

namespace treecloak::wire {
namespace {

void PutBe(Bytes& out, std::uint64_t v, std::size_t width) {
  for (std::size_t i = width; i-- > 0;) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t GetBe(std::span<const std::uint8_t> in, std::size_t offset, std::size_t width) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < width; ++i) v = (v << 8) | in[offset + i];
  return v;
}

std::uint32_t Crc32(std::span<const std::uint8_t> data) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; frames are capped well below that.
  crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
  return static_cast<std::uint32_t>(crc);
}

bool KnownType(std::uint8_t t) {
  return t >= static_cast<std::uint8_t>(MessageType::kSetupRequest) &&
         t <= static_cast<std::uint8_t>(MessageType::kError);
}

[[noreturn]] void ThrowErrno(const std::string& what) {
  throw Error(ErrorCode::kIo, what + ": " + std::strerror(errno));
}

// One direction of an in-process link.
struct Queue {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Bytes> frames;
  bool closed = false;
};

class InProcessChannel : public Channel {
 public:
  InProcessChannel(std::shared_ptr<Queue> in, std::shared_ptr<Queue> out)
      : in_(std::move(in)), out_(std::move(out)) {}
  ~InProcessChannel() override { Close(); }

  void Send(const Bytes& frame) override {
    std::lock_guard lock(out_->mu);
    if (out_->closed) throw Error(ErrorCode::kIo, "channel closed");
    out_->frames.push_back(frame);
    out_->cv.notify_one();
  }

  Bytes Receive() override {
    std::unique_lock lock(in_->mu);
    in_->cv.wait(lock, [&] { return !in_->frames.empty() || in_->closed; });
    if (in_->frames.empty()) throw Error(ErrorCode::kIo, "channel closed");
    Bytes frame = std::move(in_->frames.front());
    in_->frames.pop_front();
    return frame;
  }

  void Close() override {
    for (auto* q : {in_.get(), out_.get()}) {
      std::lock_guard lock(q->mu);
      q->closed = true;
      q->cv.notify_all();
    }
  }

 private:
  std::shared_ptr<Queue> in_;
  std::shared_ptr<Queue> out_;
};

}  // namespace

std::string_view MessageTypeName(MessageType type) {
  switch (type) {
    case MessageType::kSetupRequest: return "SETUP_REQ";
    case MessageType::kSetupResponse: return "SETUP_RESP";
    case MessageType::kQuery: return "QUERY";
    case MessageType::kBccChallenge: return "BCC_CHALLENGE";
    case MessageType::kBccResponse: return "BCC_RESPONSE";
    case MessageType::kResult: return "RESULT";
    case MessageType::kError: return "ERROR";
  }
  return "UNKNOWN";
}

Bytes EncodeFrame(const Frame& frame) {
  const std::size_t length = kFrameOverhead - 4 + frame.payload.size();
  if (length > kMaxFrameLength) throw Error(ErrorCode::kCapacity, "frame too large");
  Bytes out;
  out.reserve(length + 4);
  PutBe(out, length, 4);
  out.push_back(kWireVersion);
  out.push_back(static_cast<std::uint8_t>(frame.type));
  PutBe(out, frame.query_id, 8);
  out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  PutBe(out, Crc32(std::span(out).subspan(4)), 4);
  return out;
}

std::uint32_t FrameLength(std::span<const std::uint8_t> prefix) {
  if (prefix.size() < 4) throw Error(ErrorCode::kProtocol, "truncated length prefix");
  const auto length = static_cast<std::uint32_t>(GetBe(prefix, 0, 4));
  if (length < kFrameOverhead - 4 || length > kMaxFrameLength) {
    throw Error(ErrorCode::kProtocol, "bad frame length " + std::to_string(length));
  }
  return length;
}

Frame DecodeFrame(std::span<const std::uint8_t> bytes) {
  const std::uint32_t length = FrameLength(bytes);
  if (bytes.size() != std::size_t{length} + 4) {
    throw Error(ErrorCode::kProtocol, "frame length does not match the buffer");
  }
  const auto body = bytes.subspan(4, length - 4);
  const auto crc = static_cast<std::uint32_t>(GetBe(bytes, 4 + body.size(), 4));
  if (Crc32(body) != crc) throw Error(ErrorCode::kChecksum, "frame CRC32 mismatch");
  if (body[0] != kWireVersion) {
    throw Error(ErrorCode::kProtocol, "unsupported wire version " + std::to_string(body[0]));
  }
  if (!KnownType(body[1])) {
    throw Error(ErrorCode::kProtocol, "unknown message type " + std::to_string(body[1]));
  }
  Frame frame;
  frame.type = static_cast<MessageType>(body[1]);
  frame.query_id = GetBe(body, 2, 8);
  frame.payload.assign(body.begin() + 10, body.end());
  return frame;
}

ChannelPair MakeInProcessPair() {
  auto to_server = std::make_shared<Queue>();
  auto to_client = std::make_shared<Queue>();
  return {std::make_unique<InProcessChannel>(to_client, to_server),
          std::make_unique<InProcessChannel>(to_server, to_client)};
}

TcpChannel::~TcpChannel() { Close(); }

void TcpChannel::Close() {
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_RDWR);
    ::close(fd_);
    fd_ = -1;
  }
}

void TcpChannel::Send(const Bytes& frame) {
  if (fd_ < 0) throw Error(ErrorCode::kIo, "socket closed");
  std::size_t sent = 0;
  while (sent < frame.size()) {
    const ssize_t n = ::send(fd_, frame.data() + sent, frame.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      ThrowErrno("send");
    }
    sent += static_cast<std::size_t>(n);
  }
}

Bytes TcpChannel::Receive() {
  if (fd_ < 0) throw Error(ErrorCode::kIo, "socket closed");
  auto read_exact = [&](std::uint8_t* dst, std::size_t count) {
    std::size_t got = 0;
    while (got < count) {
      const ssize_t n = ::recv(fd_, dst + got, count - got, 0);
      if (n == 0) throw Error(ErrorCode::kIo, "peer closed the connection");
      if (n < 0) {
        if (errno == EINTR) continue;
        ThrowErrno("recv");
      }
      got += static_cast<std::size_t>(n);
    }
  };
  Bytes frame(4);
  read_exact(frame.data(), 4);
  const std::uint32_t length = FrameLength(frame);
  frame.resize(std::size_t{length} + 4);
  read_exact(frame.data() + 4, length);
  return frame;
}

TcpListener::TcpListener(const std::string& host, std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) ThrowErrno("socket");
  const int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    Close();
    throw Error(ErrorCode::kInvalidArgument, "listen address must be IPv4: " + host);
  }
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0 ||
      ::listen(fd_, 16) < 0) {
    const int saved = errno;
    Close();
    errno = saved;
    ThrowErrno("bind/listen " + host + ":" + std::to_string(port));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() { Close(); }

void TcpListener::Close() {
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_RDWR);
    ::close(fd_);
    fd_ = -1;
  }
}

std::unique_ptr<TcpChannel> TcpListener::Accept() {
  for (;;) {
    const int fd = ::accept(fd_, nullptr, nullptr);
    if (fd >= 0) {
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      return std::make_unique<TcpChannel>(fd);
    }
    if (errno != EINTR) ThrowErrno("accept");
  }
}

std::unique_ptr<TcpChannel> TcpConnect(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* found = nullptr;
  const std::string service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &found); rc != 0) {
    throw Error(ErrorCode::kIo, "resolve " + host + ": " + ::gai_strerror(rc));
  }
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(found, ::freeaddrinfo);
  const int fd = ::socket(found->ai_family, found->ai_socktype, found->ai_protocol);
  if (fd < 0) ThrowErrno("socket");
  if (::connect(fd, found->ai_addr, found->ai_addrlen) < 0) {
    const int saved = errno;
    ::close(fd);
    errno = saved;
    ThrowErrno("connect " + host + ":" + service);
  }
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return std::make_unique<TcpChannel>(fd);
}

std::pair<std::string, std::uint16_t> ParseEndpoint(std::string_view endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw Error(ErrorCode::kInvalidArgument, "endpoint must be host:port");
  }
  const auto port_text = endpoint.substr(colon + 1);
  unsigned port = 0;
  const auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc() || ptr != port_text.data() + port_text.size() || port > 65535) {
    throw Error(ErrorCode::kInvalidArgument, "bad port in endpoint");
  }
  return {std::string(endpoint.substr(0, colon)), static_cast<std::uint16_t>(port)};
}

}  // namespace treecloak::wire
