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

#include "treecloak/protocol.h"

#include <chrono>
#include <utility>

#include "treecloak/bytes.h"
#include "treecloak/error.h"

namespace treecloak::protocol {
namespace {

using wire::Frame;
using wire::MessageType;

void WriteCiphertexts(ByteWriter& out, std::span<const fhe::Ciphertext> cts) {
  out.U32(static_cast<std::uint32_t>(cts.size()));
  for (const auto& c : cts) c.Serialize(out);
}

std::vector<fhe::Ciphertext> ReadCiphertexts(ByteReader& in) {
  const std::uint32_t count = in.U32();
  if (count > in.remaining()) throw Error(ErrorCode::kProtocol, "bad ciphertext count");
  std::vector<fhe::Ciphertext> cts;
  cts.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) cts.push_back(fhe::Ciphertext::Deserialize(in));
  return cts;
}

std::size_t CiphertextBytes(std::span<const fhe::Ciphertext> cts) {
  std::size_t total = 0;
  for (const auto& c : cts) total += c.SerializedSize();
  return total;
}

Frame MakeFrame(MessageType type, std::uint64_t query_id, Bytes payload) {
  return Frame{type, query_id, std::move(payload)};
}

}  // namespace

std::string_view PhaseName(Phase phase) {
  switch (phase) {
    case Phase::kSetup: return "setup";
    case Phase::kQuerySent: return "query_sent";
    case Phase::kBccPending: return "bcc_pending";
    case Phase::kDone: return "done";
  }
  return "unknown";
}

Bytes SetupInfo::Serialize() const {
  ByteWriter out;
  params.Serialize(out);
  out.String(layout.ToJson());
  out.U8(static_cast<std::uint8_t>(kind));
  out.U32(static_cast<std::uint32_t>(num_classes));
  out.U32(static_cast<std::uint32_t>(output_count));
  out.U32(static_cast<std::uint32_t>(features.size()));
  for (const auto& f : features) {
    out.String(f.name);
    out.F64(f.min);
    out.F64(f.max);
  }
  out.U32(static_cast<std::uint32_t>(profiles.size()));
  for (const auto& p : profiles) {
    out.U32(static_cast<std::uint32_t>(p.body_size));
    out.U32(static_cast<std::uint32_t>(p.zeros));
    out.U32(static_cast<std::uint32_t>(p.randoms));
  }
  return std::move(out).bytes();
}

SetupInfo SetupInfo::Deserialize(std::span<const std::uint8_t> payload) {
  ByteReader in(payload);
  SetupInfo info;
  info.params = fhe::FheParams::Deserialize(in);
  info.layout = encoding::QueryLayout::FromJson(in.String());
  const std::uint8_t kind = in.U8();
  if (kind > static_cast<std::uint8_t>(forest::ModelKind::kAdaboost)) {
    throw Error(ErrorCode::kProtocol, "unknown model kind");
  }
  info.kind = static_cast<forest::ModelKind>(kind);
  info.num_classes = in.U32();
  info.output_count = in.U32();
  const std::uint32_t feature_count = in.U32();
  for (std::uint32_t i = 0; i < feature_count; ++i) {
    forest::FeatureRange f;
    f.name = in.String();
    f.min = in.F64();
    f.max = in.F64();
    info.features.push_back(std::move(f));
  }
  const std::uint32_t group_count = in.U32();
  for (std::uint32_t g = 0; g < group_count; ++g) {
    bcc::FrequencyProfile p;
    p.slot_count = info.params.slot_count;
    p.body_size = in.U32();
    p.zeros = in.U32();
    p.randoms = in.U32();
    p.Validate();
    info.profiles.push_back(p);
  }
  in.ExpectEnd();
  info.params.Validate();
  if (info.layout.slot_count() != info.params.slot_count ||
      info.layout.feature_count() != info.features.size() || info.profiles.empty() ||
      info.output_count == 0 || info.output_count > info.params.slot_count) {
    throw Error(ErrorCode::kProtocol, "inconsistent setup message");
  }
  return info;
}

std::shared_ptr<const ServerModel> ServerModel::Create(const forest::Model& model,
                                                       const ServerConfig& config) {
  model.Validate();
  if (model.trees.empty()) throw Error(ErrorCode::kInvalidArgument, "model has no trees");
  auto out = std::shared_ptr<ServerModel>(new ServerModel());
  out->params_ = fhe::FheParams::Create(config.slot_count, config.modulus_floor,
                                        config.depth_budget);
  out->params_.Validate();
  out->forest_ = forest::Quantize(model, config.bitwidth);
  if (out->forest_.MaxAbsScore() >= out->params_.plain_modulus / 2) {
    throw Error(ErrorCode::kCapacity, "aggregate scores do not fit below t/2");
  }
  out->paths_ = forest::BuildPathTable(out->forest_);
  out->pack_ = forest::PackLayout::Build(out->forest_, out->paths_, out->params_.row_size(),
                                         config.body_size);
  const auto keys = out->forest_.NodeKeys();
  out->plan_ = comparison::NodePlan::Build(keys, out->forest_.features.size());
  const auto names = out->forest_.feature_names();
  out->layout_ = encoding::QueryLayout::Build(
      names, config.bitwidth, encoding::CwParams::ForBitwidth(config.bitwidth),
      std::max<std::size_t>(1, out->plan_.required_repetition()), out->params_.slot_count);

  SetupInfo& setup = out->setup_;
  setup.params = out->params_;
  setup.layout = out->layout_;
  setup.kind = model.kind;
  setup.num_classes = model.num_classes;
  setup.output_count = model.output_count();
  setup.features = model.features;
  for (const auto& group : out->pack_.groups) {
    setup.profiles.push_back(
        bcc::FrequencyProfile::Balanced(group.body_size, out->params_.slot_count));
  }
  return out;
}

ServerSession::ServerSession(std::shared_ptr<const ServerModel> model, Csprng rng,
                             std::shared_ptr<fhe::OpLedger> ledger)
    : model_(std::move(model)), rng_(std::move(rng)), ledger_(std::move(ledger)) {}

template <typename F>
auto ServerSession::Timed(const char* name, F&& step) {
  const auto before = ledger_->Snapshot();
  const auto start = std::chrono::steady_clock::now();
  auto result = step();
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
  costs_.push_back({name, ledger_->Snapshot() - before, elapsed.count()});
  return result;
}

Frame ServerSession::Handle(const Frame& request) {
  try {
    switch (request.type) {
      case MessageType::kSetupRequest:
        if (phase_ == Phase::kBccPending) {
          throw Error(ErrorCode::kState, "setup requested while a query is pending");
        }
        setup_sent_ = true;
        return MakeFrame(MessageType::kSetupResponse, request.query_id,
                         model_->setup().Serialize());
      case MessageType::kQuery:
        return OnQuery(request);
      case MessageType::kBccResponse:
        return OnBccResponse(request);
      default:
        throw Error(ErrorCode::kProtocol, "unexpected " +
                                              std::string(wire::MessageTypeName(request.type)) +
                                              " from client");
    }
  } catch (const Error& e) {
    // A query that failed mid-evaluation is dropped; a pending one survives.
    if (phase_ == Phase::kQuerySent) phase_ = served_ ? Phase::kDone : Phase::kSetup;
    return MakeFrame(MessageType::kError, request.query_id, EncodeErrorPayload(e.code(), e.what()));
  }
}

Frame ServerSession::OnQuery(const Frame& request) {
  if (!setup_sent_) throw Error(ErrorCode::kState, "query before setup");
  if (phase_ == Phase::kBccPending) throw Error(ErrorCode::kState, "previous query still pending");
  ByteReader in(request.payload);
  const std::uint8_t has_key = in.U8();
  if (has_key > 1) throw Error(ErrorCode::kProtocol, "bad key flag");
  if (has_key == 1) {
    auto key = fhe::PublicKey::Deserialize(in);
    if (!(key.params == model_->params())) {
      throw Error(ErrorCode::kParamMismatch, "evaluation key parameters differ from setup");
    }
    eval_.emplace(std::move(key), ledger_);
  }
  if (!eval_) throw Error(ErrorCode::kState, "first query must carry the evaluation key");
  const auto compressed = ReadCiphertexts(in);
  in.ExpectEnd();
  const auto& layout = model_->layout();
  if (compressed.size() != layout.compressed_count()) {
    throw Error(ErrorCode::kLayout, "query carries " + std::to_string(compressed.size()) +
                                        " ciphertexts, layout expects " +
                                        std::to_string(layout.compressed_count()));
  }

  phase_ = Phase::kQuerySent;
  query_id_ = request.query_id;
  records_.clear();
  costs_.clear();
  Csprng rng = rng_.Fork();
  const fhe::Evaluator& eval = *eval_;
  const auto& pack = model_->pack();

  const auto planes = Timed("decompress", [&] {
    return encoding::DecompressQuery(compressed, layout, eval);
  });
  const auto bits = Timed("compare", [&] {
    return comparison::BatchCompare(planes, layout, model_->plan(), eval);
  });
  const auto expanded = Timed("sumpath", [&] {
    const auto packed = forest::SumPath(model_->forest(), model_->paths(), pack, model_->plan(),
                                        bits, eval, rng);
    return forest::ExpandClusters(packed, pack, eval, rng);
  });
  const auto shuffled = Timed("bcc", [&] {
    std::vector<bcc::ShuffleResult> results;
    for (std::size_t g = 0; g < pack.groups.size(); ++g) {
      const auto& group = pack.groups[g];
      results.push_back(bcc::Conceal(expanded[g], group.path_count, group.tree_count(),
                                     group.path_count - group.tree_count(),
                                     model_->setup().profiles[g], eval, rng));
    }
    return results;
  });

  std::vector<fhe::Ciphertext> challenge;
  for (const auto& s : shuffled) {
    challenge.push_back(s.ciphertext);
    records_.push_back(s.record);
  }
  ByteWriter out;
  WriteCiphertexts(out, challenge);
  phase_ = Phase::kBccPending;
  return MakeFrame(MessageType::kBccChallenge, query_id_, std::move(out).bytes());
}

Frame ServerSession::OnBccResponse(const Frame& request) {
  if (phase_ != Phase::kBccPending) throw Error(ErrorCode::kState, "no query awaiting BCC");
  if (request.query_id != query_id_) throw Error(ErrorCode::kState, "stale query id");
  ByteReader in(request.payload);
  const auto converted = ReadCiphertexts(in);
  in.ExpectEnd();
  const auto& pack = model_->pack();
  if (converted.size() != pack.groups.size()) {
    throw Error(ErrorCode::kProtocol, "BCC response has the wrong ciphertext count");
  }
  const fhe::Evaluator& eval = *eval_;
  const auto& params = model_->params();
  const std::size_t outputs = model_->setup().output_count;

  const auto result = Timed("finalize", [&] {
    std::vector<std::vector<std::size_t>> positions;
    for (const auto& record : records_) positions.push_back(record.Positions());
    fhe::Ciphertext total;
    for (std::size_t c = 0; c < outputs; ++c) {
      std::vector<fhe::Ciphertext> terms;
      for (std::size_t g = 0; g < pack.groups.size(); ++g) {
        terms.push_back(eval.Multiply(
            converted[g], forest::LeafPlaintext(model_->forest(), model_->paths(), pack, g, c,
                                                positions[g], params)));
      }
      auto acc = eval.AddMany(terms);
      for (std::size_t step = 1; step < params.row_size(); step *= 2) {
        acc = eval.Add(acc, eval.RotateRows(acc, step));
      }
      acc = eval.Add(acc, eval.RotateColumns(acc));
      if (outputs > 1) {
        std::vector<std::uint64_t> mask(params.slot_count, 0);
        mask[c] = 1;
        acc = eval.Multiply(acc, fhe::PlainVector(std::move(mask)));
      }
      total = total.valid() ? eval.Add(total, acc) : acc;
    }
    return total;
  });

  ByteWriter out;
  out.U32(static_cast<std::uint32_t>(outputs));
  result.Serialize(out);
  phase_ = Phase::kDone;
  served_ = true;
  return MakeFrame(MessageType::kResult, query_id_, std::move(out).bytes());
}

ClientSession::ClientSession(Csprng rng, std::shared_ptr<fhe::OpLedger> ledger)
    : rng_(std::move(rng)), ledger_(std::move(ledger)) {}

Frame ClientSession::SetupRequest() const { return MakeFrame(MessageType::kSetupRequest, 0, {}); }

void ClientSession::Expect(const Frame& frame, MessageType type) const {
  if (frame.type == MessageType::kError) ThrowRemoteError(frame);
  if (frame.type != type) {
    throw Error(ErrorCode::kProtocol, "expected " + std::string(wire::MessageTypeName(type)) +
                                          ", got " +
                                          std::string(wire::MessageTypeName(frame.type)));
  }
}

void ClientSession::AcceptSetup(const Frame& response) {
  Expect(response, MessageType::kSetupResponse);
  if (phase_ != Phase::kSetup) throw Error(ErrorCode::kState, "setup already completed");
  setup_ = SetupInfo::Deserialize(response.payload);
  keys_ = fhe::GenerateKeys(setup_->params, rng_);
  key_sent_ = false;
}

const SetupInfo& ClientSession::setup() const {
  if (!setup_) throw Error(ErrorCode::kState, "setup not completed");
  return *setup_;
}

Frame ClientSession::Query(std::span<const double> row) {
  const auto& info = setup();
  if (row.size() != info.features.size()) {
    throw Error(ErrorCode::kInvalidArgument, "query has " + std::to_string(row.size()) +
                                                 " features, model expects " +
                                                 std::to_string(info.features.size()));
  }
  encoding::FeatureValues values;
  for (std::size_t i = 0; i < row.size(); ++i) {
    values[info.features[i].name] =
        forest::QuantizeValue(row[i], info.features[i], info.layout.bitwidth());
  }
  return Query(values);
}

Frame ClientSession::Query(const encoding::FeatureValues& values) {
  const auto& info = setup();
  if (phase_ == Phase::kQuerySent || phase_ == Phase::kBccPending) {
    throw Error(ErrorCode::kState, "a query is already in flight");
  }
  const fhe::Decryptor key(keys_->secret, ledger_);
  const auto query = encoding::CompressQuery(values, info.layout, key);
  ByteWriter out;
  out.U8(key_sent_ ? 0 : 1);
  stats_ = TranscriptStats{};
  if (!key_sent_) {
    const std::size_t before = out.bytes().size();
    keys_->public_key.Serialize(out);
    stats_.key_bytes = out.bytes().size() - before;
  }
  WriteCiphertexts(out, query.ciphertexts);
  stats_.query_ciphertexts = query.ciphertexts.size();
  stats_.query_bytes = CiphertextBytes(query.ciphertexts);
  key_sent_ = true;
  do {
    query_id_ = rng_.NextU64();
  } while (query_id_ == 0);
  phase_ = Phase::kQuerySent;
  return MakeFrame(MessageType::kQuery, query_id_, std::move(out).bytes());
}

Frame ClientSession::RespondToChallenge(const Frame& challenge) {
  if (phase_ != Phase::kQuerySent) throw Error(ErrorCode::kState, "no query in flight");
  Expect(challenge, MessageType::kBccChallenge);
  if (challenge.query_id != query_id_) throw Error(ErrorCode::kProtocol, "challenge for another query");
  ByteReader in(challenge.payload);
  const auto shuffled = ReadCiphertexts(in);
  in.ExpectEnd();
  if (shuffled.size() != setup().profiles.size()) {
    throw Error(ErrorCode::kProtocol, "challenge has the wrong ciphertext count");
  }
  const fhe::Decryptor key(keys_->secret, ledger_);
  std::vector<fhe::Ciphertext> converted;
  stats_.converted_ones.clear();
  for (const auto& c : shuffled) {
    const auto slots = fhe::Decode(key.Decrypt(c));
    std::vector<std::uint64_t> indicator(slots.size());
    std::size_t ones = 0;
    for (std::size_t i = 0; i < slots.size(); ++i) {
      indicator[i] = slots[i] == 0 ? 1 : 0;
      ones += indicator[i];
    }
    stats_.converted_ones.push_back(ones);
    converted.push_back(key.Encrypt(fhe::PlainVector(std::move(indicator))));
  }
  ByteWriter out;
  WriteCiphertexts(out, converted);
  phase_ = Phase::kBccPending;
  return MakeFrame(MessageType::kBccResponse, query_id_, std::move(out).bytes());
}

InferenceResult ClientSession::ReadResult(const Frame& result) {
  if (phase_ != Phase::kBccPending) throw Error(ErrorCode::kState, "no BCC response outstanding");
  Expect(result, MessageType::kResult);
  if (result.query_id != query_id_) throw Error(ErrorCode::kProtocol, "result for another query");
  const auto& info = setup();
  ByteReader in(result.payload);
  const std::uint32_t outputs = in.U32();
  const auto cipher = fhe::Ciphertext::Deserialize(in);
  in.ExpectEnd();
  if (outputs != info.output_count) throw Error(ErrorCode::kProtocol, "unexpected output count");
  const fhe::Decryptor key(keys_->secret, ledger_);
  const auto plain = key.Decrypt(cipher);
  InferenceResult out;
  out.query_id = query_id_;
  for (std::size_t c = 0; c < outputs; ++c) {
    out.scores.push_back(fhe::DecodeSigned(plain[c], info.params.plain_modulus));
  }
  out.predicted_class = forest::PredictClass(std::span<const std::int64_t>(out.scores));
  out.stats = stats_;
  phase_ = Phase::kDone;
  return out;
}

Bytes EncodeErrorPayload(ErrorCode code, std::string_view message) {
  ByteWriter out;
  out.U32(static_cast<std::uint32_t>(code));
  out.String(message);
  return std::move(out).bytes();
}

void ThrowRemoteError(const Frame& frame) {
  ByteReader in(frame.payload);
  const std::uint32_t raw = in.U32();
  const std::string message = in.String();
  const auto code = raw <= static_cast<std::uint32_t>(ErrorCode::kIo) ? static_cast<ErrorCode>(raw)
                                                                       : ErrorCode::kProtocol;
  throw Error(code, "server (query " + std::to_string(frame.query_id) + "): " + message);
}

void Serve(ServerSession& session, wire::Channel& channel) {
  for (;;) {
    Bytes bytes;
    try {
      bytes = channel.Receive();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kIo) return;
      throw;
    }
    Frame reply;
    try {
      reply = session.Handle(wire::DecodeFrame(bytes));
    } catch (const Error& e) {
      reply = MakeFrame(MessageType::kError, 0, EncodeErrorPayload(e.code(), e.what()));
    }
    channel.Send(wire::EncodeFrame(reply));
  }
}

namespace {

Frame RoundTrip(wire::Channel& channel, const Frame& request, TranscriptStats* stats) {
  const Bytes out = wire::EncodeFrame(request);
  channel.Send(out);
  const Bytes in = channel.Receive();
  if (stats) {
    ++stats->frames_sent;
    ++stats->frames_received;
    stats->bytes_sent += out.size();
    stats->bytes_received += in.size();
  }
  return wire::DecodeFrame(in);
}

}  // namespace

void Connect(ClientSession& client, wire::Channel& channel) {
  client.AcceptSetup(RoundTrip(channel, client.SetupRequest(), nullptr));
}

InferenceResult Infer(ClientSession& client, wire::Channel& channel, std::span<const double> row) {
  TranscriptStats wire_stats;
  const Frame challenge = RoundTrip(channel, client.Query(row), &wire_stats);
  ++wire_stats.exchanges;  // query
  const Frame response = client.RespondToChallenge(challenge);
  ++wire_stats.exchanges;  // BCC
  const Frame result = RoundTrip(channel, response, &wire_stats);
  auto out = client.ReadResult(result);
  ++wire_stats.exchanges;  // result
  out.stats.exchanges = wire_stats.exchanges;
  out.stats.frames_sent = wire_stats.frames_sent;
  out.stats.frames_received = wire_stats.frames_received;
  out.stats.bytes_sent = wire_stats.bytes_sent;
  out.stats.bytes_received = wire_stats.bytes_received;
  return out;
}

}  // namespace treecloak::protocol
