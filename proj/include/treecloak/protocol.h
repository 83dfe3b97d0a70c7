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

#ifndef TREECLOAK_PROTOCOL_H_
#define TREECLOAK_PROTOCOL_H_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "treecloak/bcc.h"
#include "treecloak/comparison.h"
#include "treecloak/encoding.h"
#include "treecloak/fhe.h"
#include "treecloak/forest.h"
#include "treecloak/random.h"
#include "treecloak/wire.h"

namespace treecloak::protocol {

enum class Phase { kSetup, kQuerySent, kBccPending, kDone };
std::string_view PhaseName(Phase phase);

struct ServerConfig {
  std::size_t slot_count = fhe::kDefaultSlotCount;
  std::uint64_t modulus_floor = fhe::kDefaultPlainModulusFloor;
  int depth_budget = fhe::kDefaultDepthBudget;
  int bitwidth = 16;
  // Forces one padded body length for every group, so different models can
  // share a frequency profile.
  std::optional<std::size_t> body_size;
};

// Everything the client learns at setup.
struct SetupInfo {
  fhe::FheParams params;
  encoding::QueryLayout layout;
  forest::ModelKind kind = forest::ModelKind::kXgboost;
  std::size_t num_classes = 2;
  std::size_t output_count = 1;
  std::vector<forest::FeatureRange> features;
  std::vector<bcc::FrequencyProfile> profiles;  // one per packed group

  Bytes Serialize() const;
  static SetupInfo Deserialize(std::span<const std::uint8_t> payload);
};

// Immutable per-model server state shared by all sessions.
class ServerModel {
 public:
  // Throws kInvalidArgument for a model without trees and kCapacity when the
  // aggregate score range does not fit below t / 2.
  static std::shared_ptr<const ServerModel> Create(const forest::Model& model,
                                                   const ServerConfig& config);

  const fhe::FheParams& params() const { return params_; }
  const forest::QuantizedForest& forest() const { return forest_; }
  const forest::PathTable& paths() const { return paths_; }
  const forest::PackLayout& pack() const { return pack_; }
  const comparison::NodePlan& plan() const { return plan_; }
  const encoding::QueryLayout& layout() const { return layout_; }
  const SetupInfo& setup() const { return setup_; }

 private:
  fhe::FheParams params_;
  forest::QuantizedForest forest_;
  forest::PathTable paths_;
  forest::PackLayout pack_;
  comparison::NodePlan plan_;
  encoding::QueryLayout layout_;
  SetupInfo setup_;
};

// Homomorphic cost and wall time of one server step.
struct PhaseCost {
  std::string name;
  fhe::LedgerSnapshot ops;
  double seconds = 0.0;
};

// Server side of one client connection. Handle() never throws for bad
// requests; it answers with an ERROR frame carrying the query id.
class ServerSession {
 public:
  ServerSession(std::shared_ptr<const ServerModel> model, Csprng rng,
                std::shared_ptr<fhe::OpLedger> ledger = std::make_shared<fhe::OpLedger>());

  wire::Frame Handle(const wire::Frame& request);

  Phase phase() const { return phase_; }
  const fhe::OpLedger& ledger() const { return *ledger_; }
  // Costs of the most recent query, in execution order.
  const std::vector<PhaseCost>& last_costs() const { return costs_; }
  // Shuffle records of the pending or most recent query, one per group.
  const std::vector<bcc::ShuffleRecord>& records() const { return records_; }

 private:
  wire::Frame OnQuery(const wire::Frame& request);
  wire::Frame OnBccResponse(const wire::Frame& request);
  template <typename F>
  auto Timed(const char* name, F&& step);

  std::shared_ptr<const ServerModel> model_;
  Csprng rng_;
  std::shared_ptr<fhe::OpLedger> ledger_;
  std::optional<fhe::Evaluator> eval_;
  Phase phase_ = Phase::kSetup;
  bool setup_sent_ = false;
  bool served_ = false;
  std::uint64_t query_id_ = 0;
  std::vector<bcc::ShuffleRecord> records_;
  std::vector<PhaseCost> costs_;
};

// Client-visible transcript statistics of one inference.
struct TranscriptStats {
  // QUERY, the BCC challenge/response pair and RESULT.
  std::size_t exchanges = 0;
  std::size_t frames_sent = 0;
  std::size_t frames_received = 0;
  std::size_t bytes_sent = 0;
  std::size_t bytes_received = 0;
  std::size_t query_ciphertexts = 0;
  std::size_t query_bytes = 0;  // serialized ciphertexts, key excluded
  std::size_t key_bytes = 0;
  // Per group: slots the client converted to 1 (zeros of C_s).
  std::vector<std::size_t> converted_ones;
};

struct InferenceResult {
  std::uint64_t query_id = 0;
  std::vector<std::int64_t> scores;  // fixed-point, one per output
  std::size_t predicted_class = 0;
  TranscriptStats stats;
};

class ClientSession {
 public:
  explicit ClientSession(Csprng rng,
                         std::shared_ptr<fhe::OpLedger> ledger = std::make_shared<fhe::OpLedger>());

  wire::Frame SetupRequest() const;
  // Generates the key pair for the announced parameters.
  void AcceptSetup(const wire::Frame& response);
  const SetupInfo& setup() const;

  // Raw feature values in setup feature order.
  wire::Frame Query(std::span<const double> row);
  // Quantized values keyed by feature name; throws kLayout on a missing one.
  wire::Frame Query(const encoding::FeatureValues& values);
  wire::Frame RespondToChallenge(const wire::Frame& challenge);
  InferenceResult ReadResult(const wire::Frame& result);

  Phase phase() const { return phase_; }
  const fhe::OpLedger& ledger() const { return *ledger_; }
  // Transcript of the current or last query.
  const TranscriptStats& stats() const { return stats_; }

 private:
  void Expect(const wire::Frame& frame, wire::MessageType type) const;

  Csprng rng_;
  std::shared_ptr<fhe::OpLedger> ledger_;
  std::optional<SetupInfo> setup_;
  std::optional<fhe::KeyPair> keys_;
  bool key_sent_ = false;
  Phase phase_ = Phase::kSetup;
  std::uint64_t query_id_ = 0;
  TranscriptStats stats_;
};

// Payload of an ERROR frame.
Bytes EncodeErrorPayload(ErrorCode code, std::string_view message);
// Rethrows the error carried by an ERROR frame.
[[noreturn]] void ThrowRemoteError(const wire::Frame& frame);

// Answers frames until the peer closes the channel.
void Serve(ServerSession& session, wire::Channel& channel);
// Runs the setup exchange.
void Connect(ClientSession& client, wire::Channel& channel);
// One inference: QUERY, BCC_CHALLENGE, BCC_RESPONSE, RESULT.
InferenceResult Infer(ClientSession& client, wire::Channel& channel, std::span<const double> row);

}  // namespace treecloak::protocol

#endif  // TREECLOAK_PROTOCOL_H_
