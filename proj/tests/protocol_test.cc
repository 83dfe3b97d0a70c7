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

#include <gtest/gtest.h>

#include <thread>

#include "treecloak/error.h"
#include "treecloak/random.h"
#include "treecloak/synthetic.h"
#include "treecloak/wire.h"

namespace treecloak::protocol {
namespace {

using forest::Model;
using forest::ModelKind;
using wire::Frame;
using wire::MessageType;

ServerConfig SmallConfig() {
  ServerConfig config;
  config.slot_count = 2048;
  config.bitwidth = 8;
  return config;
}

// Independent plaintext walk over the quantized forest.
std::vector<std::int64_t> OracleScores(const forest::QuantizedForest& f,
                                       std::span<const std::uint64_t> x) {
  std::vector<std::int64_t> scores(f.output_count, 0);
  for (const auto& tree : f.trees) {
    std::int32_t ref = tree.root();
    while (!forest::IsLeafRef(ref)) {
      const auto& node = tree.nodes[static_cast<std::size_t>(ref)];
      ref = x[node.feature] > node.threshold ? node.right : node.left;
    }
    const auto& leaf = tree.leaves[forest::LeafIndex(ref)];
    scores[leaf.output] += leaf.score;
  }
  return scores;
}

std::size_t OracleClass(std::span<const std::int64_t> scores) {
  if (scores.size() == 1) return scores[0] > 0 ? 1 : 0;
  std::size_t best = 0;
  for (std::size_t c = 1; c < scores.size(); ++c) {
    if (scores[c] > scores[best]) best = c;
  }
  return best;
}

// Server thread bound to one in-process channel.
class Harness {
 public:
  Harness(std::shared_ptr<const ServerModel> model, std::uint64_t seed)
      : pair_(wire::MakeInProcessPair()),
        server_(std::move(model), Csprng(seed)),
        client_(Csprng(seed + 1)),
        thread_([this] { Serve(server_, *pair_.server); }) {
    Connect(client_, *pair_.client);
  }
  ~Harness() {
    pair_.client->Close();
    thread_.join();
  }
  ClientSession& client() { return client_; }
  ServerSession& server() { return server_; }
  wire::Channel& channel() { return *pair_.client; }

 private:
  wire::ChannelPair pair_;
  ServerSession server_;
  ClientSession client_;
  std::thread thread_;
};

Model TwoFeatureModel() {
  // age has three distinct thresholds, sleep two.
  Model m;
  m.features = {{"age", 0, 100}, {"sleep", 0, 12}};
  forest::Tree t1;
  t1.nodes = {{0, 30, 1, 2}, {1, 6, forest::LeafRef(0), forest::LeafRef(1)},
              {0, 60, forest::LeafRef(2), forest::LeafRef(3)}};
  t1.leaves = {{-0.5, {}}, {0.25, {}}, {0.5, {}}, {-0.25, {}}};
  forest::Tree t2;
  t2.nodes = {{0, 45, 1, forest::LeafRef(2)}, {1, 8, forest::LeafRef(0), forest::LeafRef(1)}};
  t2.leaves = {{0.1, {}}, {-0.3, {}}, {0.2, {}}};
  m.trees = {t1, t2};
  return m;
}

TEST(WireTest, FrameRoundTrip) {
  Frame f{MessageType::kQuery, 0x0102030405060708ULL, {1, 2, 3, 250}};
  const auto bytes = wire::EncodeFrame(f);
  ASSERT_EQ(bytes.size(), wire::kFrameOverhead + 4);
  // Big-endian length prefix and query id.
  EXPECT_EQ(bytes[3], bytes.size() - 4);
  EXPECT_EQ(bytes[4], wire::kWireVersion);
  EXPECT_EQ(bytes[5], static_cast<std::uint8_t>(MessageType::kQuery));
  EXPECT_EQ(bytes[6], 0x01);
  EXPECT_EQ(bytes[13], 0x08);
  const auto back = wire::DecodeFrame(bytes);
  EXPECT_EQ(back.type, f.type);
  EXPECT_EQ(back.query_id, f.query_id);
  EXPECT_EQ(back.payload, f.payload);
}

TEST(WireTest, RejectsTamperingAndBadHeaders) {
  auto bytes = wire::EncodeFrame({MessageType::kResult, 7, {9, 9, 9}});
  for (std::size_t i = 4; i < bytes.size(); ++i) {
    auto copy = bytes;
    copy[i] ^= 0x10;
    try {
      wire::DecodeFrame(copy);
      ADD_FAILURE() << "byte " << i;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kChecksum) << i;
    }
  }
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(wire::DecodeFrame(truncated), Error);
  // The version byte is covered by the checksum.
  Frame f{MessageType::kResult, 1, {}};
  auto v2 = wire::EncodeFrame(f);
  v2[4] = 2;
  try {
    wire::DecodeFrame(v2);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kChecksum);
  }
}

TEST(WireTest, ParseEndpoint) {
  EXPECT_EQ(wire::ParseEndpoint("127.0.0.1:8080"), std::make_pair(std::string("127.0.0.1"),
                                                                    std::uint16_t{8080}));
  EXPECT_THROW(wire::ParseEndpoint("localhost"), Error);
  EXPECT_THROW(wire::ParseEndpoint("h:99999"), Error);
}

TEST(SetupTest, RepetitionFollowsDistinctThresholds) {
  const auto model = ServerModel::Create(TwoFeatureModel(), SmallConfig());
  EXPECT_EQ(model->layout().repetition(), 3u);
  EXPECT_EQ(model->plan().size(), 5u);
}

TEST(SetupTest, SingleNodeModelUsesNoRepetition) {
  Model m;
  m.features = {{"x", 0, 1}};
  forest::Tree t;
  t.nodes = {{0, 0.5, forest::LeafRef(0), forest::LeafRef(1)}};
  t.leaves = {{-1, {}}, {1, {}}};
  m.trees = {t};
  EXPECT_EQ(ServerModel::Create(m, SmallConfig())->layout().repetition(), 1u);
}

TEST(SetupTest, ZeroTreeModelFailsAtSetup) {
  Model m;
  m.features = {{"x", 0, 1}};
  try {
    ServerModel::Create(m, SmallConfig());
    FAIL();
  } catch (const Error& e) {
    EXPECT_TRUE(e.code() == ErrorCode::kInvalidArgument || e.code() == ErrorCode::kSchema);
  }
}

TEST(SetupTest, ScoreRangeMustFitBelowHalfModulus) {
  Model m = TwoFeatureModel();
  m.trees[0].leaves[0].score = 1000.0;  // 1000 * 2^12 > t / 2
  try {
    ServerModel::Create(m, SmallConfig());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCapacity);
  }
}

TEST(SetupTest, SetupInfoRoundTrip) {
  const auto model = ServerModel::Create(TwoFeatureModel(), SmallConfig());
  const auto back = SetupInfo::Deserialize(model->setup().Serialize());
  EXPECT_EQ(back.params, model->params());
  EXPECT_EQ(back.layout, model->layout());
  EXPECT_EQ(back.features, TwoFeatureModel().features);
  EXPECT_EQ(back.profiles, model->setup().profiles);
  EXPECT_EQ(back.output_count, 1u);
  EXPECT_EQ(encoding::QueryLayout::FromJson(back.layout.ToJson()), back.layout);
}

void CheckEndToEnd(const synthetic::ForestSpec& spec, std::uint64_t seed, std::size_t queries) {
  Csprng rng(seed);
  const Model model = synthetic::RandomModel(spec, rng);
  const auto server_model = ServerModel::Create(model, SmallConfig());
  const auto rows = synthetic::RandomRows(model, queries, rng);
  Harness h(server_model, seed);
  for (const auto& row : rows.rows) {
    const auto x = forest::QuantizeRow(server_model->forest(), row);
    const auto expected = OracleScores(server_model->forest(), x);
    const auto result = Infer(h.client(), h.channel(), row);
    EXPECT_EQ(result.scores, expected);
    EXPECT_EQ(result.predicted_class, OracleClass(expected));
    EXPECT_EQ(result.stats.exchanges, 3u);
    EXPECT_EQ(result.stats.frames_sent, 2u);
    EXPECT_EQ(result.stats.frames_received, 2u);
    EXPECT_EQ(result.stats.query_ciphertexts, server_model->layout().compressed_count());
  }
  EXPECT_EQ(h.server().ledger().Snapshot().decryptions, 0u);
  EXPECT_GT(h.client().ledger().Snapshot().decryptions, 0u);
}

TEST(EndToEndTest, BinaryXgboost) {
  CheckEndToEnd({ModelKind::kXgboost, 2, 4, 8, 4, 0.8, 0}, 11, 12);
}

TEST(EndToEndTest, MulticlassXgboost) {
  CheckEndToEnd({ModelKind::kXgboost, 3, 3, 9, 3, 0.8, 3}, 12, 10);
}

TEST(EndToEndTest, BinaryAdaboost) {
  CheckEndToEnd({ModelKind::kAdaboost, 2, 4, 6, 3, 0.8, 0}, 13, 10);
}

TEST(EndToEndTest, MulticlassAdaboost) {
  CheckEndToEnd({ModelKind::kAdaboost, 4, 3, 8, 3, 0.8, 2}, 14, 10);
}

TEST(EndToEndTest, AdaboostScoreIsSignedWeightSum) {
  Csprng rng(21);
  const Model model = synthetic::RandomModel({ModelKind::kAdaboost, 2, 3, 5, 3, 0.8, 0}, rng);
  const auto server_model = ServerModel::Create(model, SmallConfig());
  const auto rows = synthetic::RandomRows(model, 5, rng);
  Harness h(server_model, 21);
  for (const auto& row : rows.rows) {
    const auto x = forest::QuantizeRow(server_model->forest(), row);
    std::int64_t expected = 0;
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
      const auto& qt = server_model->forest().trees[t];
      std::int32_t ref = qt.root();
      while (!forest::IsLeafRef(ref)) {
        const auto& n = qt.nodes[static_cast<std::size_t>(ref)];
        ref = x[n.feature] > n.threshold ? n.right : n.left;
      }
      const auto& leaf = model.trees[t].leaves[forest::LeafIndex(ref)];
      const std::int64_t w = forest::QuantizeScore(*model.trees[t].weight);
      expected += leaf.class_id == 1u ? w : -w;
    }
    EXPECT_EQ(Infer(h.client(), h.channel(), row).scores, std::vector<std::int64_t>{expected});
  }
}

TEST(SessionTest, PhasesAndKeyOnFirstQueryOnly) {
  const auto model = ServerModel::Create(TwoFeatureModel(), SmallConfig());
  ServerSession server(model, Csprng(1));
  ClientSession client(Csprng(2));
  EXPECT_EQ(client.phase(), Phase::kSetup);
  client.AcceptSetup(server.Handle(client.SetupRequest()));
  const std::vector<double> row = {40, 7};
  for (int round = 0; round < 2; ++round) {
    const Frame query = client.Query(row);
    EXPECT_EQ(client.phase(), Phase::kQuerySent);
    EXPECT_EQ(client.stats().key_bytes > 0, round == 0);
    const Frame challenge = server.Handle(query);
    ASSERT_EQ(challenge.type, MessageType::kBccChallenge);
    EXPECT_EQ(server.phase(), Phase::kBccPending);
    const Frame response = client.RespondToChallenge(challenge);
    EXPECT_EQ(client.phase(), Phase::kBccPending);
    const Frame result = server.Handle(response);
    ASSERT_EQ(result.type, MessageType::kResult);
    EXPECT_EQ(server.phase(), Phase::kDone);
    client.ReadResult(result);
    EXPECT_EQ(client.phase(), Phase::kDone);
  }
  std::vector<std::string> names;
  for (const auto& c : server.last_costs()) names.push_back(c.name);
  EXPECT_EQ(names, (std::vector<std::string>{"decompress", "compare", "sumpath", "bcc",
                                             "finalize"}));
  for (const auto& c : server.last_costs()) {
    if (c.name == "sumpath") {
      EXPECT_EQ(c.ops.cipher_mults, 0u);
    }
    if (c.name == "finalize") {
      EXPECT_EQ(c.ops.cipher_mults, 0u);
    }
  }
}

TEST(SessionTest, StaleQueryIdAndOutOfOrderMessages) {
  const auto model = ServerModel::Create(TwoFeatureModel(), SmallConfig());
  ServerSession server(model, Csprng(3));
  ClientSession client(Csprng(4));
  const auto code_of = [](const Frame& f) {
    EXPECT_EQ(f.type, MessageType::kError);
    try {
      ThrowRemoteError(f);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kIo;
  };
  // Query before setup.
  EXPECT_EQ(code_of(server.Handle({MessageType::kQuery, 5, {1}})), ErrorCode::kState);
  client.AcceptSetup(server.Handle(client.SetupRequest()));
  EXPECT_EQ(code_of(server.Handle({MessageType::kBccResponse, 5, {}})), ErrorCode::kState);
  const Frame challenge = server.Handle(client.Query(std::vector<double>{10, 3}));
  Frame response = client.RespondToChallenge(challenge);
  Frame stale = response;
  stale.query_id ^= 1;
  EXPECT_EQ(code_of(server.Handle(stale)), ErrorCode::kState);
  // The pending query survives the rejected frame.
  EXPECT_EQ(server.phase(), Phase::kBccPending);
  EXPECT_EQ(server.Handle(response).type, MessageType::kResult);
  EXPECT_EQ(code_of(server.Handle(response)), ErrorCode::kState);
}

TEST(SessionTest, WrongCiphertextCountIsALayoutError) {
  const auto model = ServerModel::Create(TwoFeatureModel(), SmallConfig());
  ServerSession server(model, Csprng(3));
  ClientSession client(Csprng(4));
  client.AcceptSetup(server.Handle(client.SetupRequest()));
  Frame query = client.Query(std::vector<double>{10, 3});
  // Drop the last ciphertext: rewrite the count and cut the tail.
  ByteReader in(query.payload);
  in.U8();
  fhe::PublicKey::Deserialize(in);
  const std::size_t count_at = query.payload.size() - in.remaining();
  const std::uint32_t count = in.U32();
  std::vector<fhe::Ciphertext> cts;
  for (std::uint32_t i = 0; i < count; ++i) cts.push_back(fhe::Ciphertext::Deserialize(in));
  ByteWriter out;
  out.Raw(std::span(query.payload).first(count_at));
  out.U32(count - 1);
  for (std::uint32_t i = 0; i + 1 < count; ++i) cts[i].Serialize(out);
  query.payload = std::move(out).bytes();
  const Frame reply = server.Handle(query);
  ASSERT_EQ(reply.type, MessageType::kError);
  EXPECT_EQ(reply.query_id, query.query_id);
  try {
    ThrowRemoteError(reply);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kLayout);
  }
}

TEST(SessionTest, TamperedFrameIsRejectedWithChecksumError) {
  const auto model = ServerModel::Create(TwoFeatureModel(), SmallConfig());
  Harness h(model, 5);
  Bytes bytes = wire::EncodeFrame(h.client().Query(std::vector<double>{50, 9}));
  bytes[bytes.size() / 2] ^= 0x01;
  h.channel().Send(bytes);
  const Frame reply = wire::DecodeFrame(h.channel().Receive());
  ASSERT_EQ(reply.type, MessageType::kError);
  try {
    ThrowRemoteError(reply);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kChecksum);
  }
}

TEST(SessionTest, MissingFeatureIsRejectedByClient) {
  const auto model = ServerModel::Create(TwoFeatureModel(), SmallConfig());
  ServerSession server(model, Csprng(3));
  ClientSession client(Csprng(4));
  client.AcceptSetup(server.Handle(client.SetupRequest()));
  EXPECT_THROW(client.Query(encoding::FeatureValues{{"age", 3}}), Error);
  EXPECT_THROW(client.Query(std::vector<double>{1.0}), Error);
}

TEST(SessionTest, QueryIsDeterministicUnderFixedSeed) {
  const auto model = ServerModel::Create(TwoFeatureModel(), SmallConfig());
  std::vector<Bytes> frames;
  for (int i = 0; i < 2; ++i) {
    ServerSession server(model, Csprng(7));
    ClientSession client(Csprng(8));
    client.AcceptSetup(server.Handle(client.SetupRequest()));
    const Frame challenge = server.Handle(client.Query(std::vector<double>{33, 4}));
    frames.push_back(wire::EncodeFrame(challenge));
  }
  EXPECT_EQ(frames[0], frames[1]);
}

TEST(SessionTest, FreshRandomnessKeepsClassCounts) {
  const auto model = ServerModel::Create(TwoFeatureModel(), SmallConfig());
  Harness h(model, 9);
  const std::vector<double> row = {70, 2};
  const Frame c1 = wire::DecodeFrame(
      (h.channel().Send(wire::EncodeFrame(h.client().Query(row))), h.channel().Receive()));
  const Frame r1 = h.client().RespondToChallenge(c1);
  const auto ones1 = h.client().stats().converted_ones;
  h.channel().Send(wire::EncodeFrame(r1));
  const auto first = h.client().ReadResult(wire::DecodeFrame(h.channel().Receive()));
  const auto second = Infer(h.client(), h.channel(), row);
  EXPECT_EQ(first.scores, second.scores);
  EXPECT_EQ(ones1, second.stats.converted_ones);
  // Reference ciphertexts serialize their slots, so different payloads mean
  // different decryptions.
  h.channel().Send(wire::EncodeFrame(h.client().Query(row)));
  const Frame c3 = wire::DecodeFrame(h.channel().Receive());
  EXPECT_NE(c1.payload, c3.payload);
  h.channel().Send(wire::EncodeFrame(h.client().RespondToChallenge(c3)));
  h.client().ReadResult(wire::DecodeFrame(h.channel().Receive()));
}

TEST(SessionTest, SharedProfileGivesIdenticalTranscriptStatistics) {
  ServerConfig config = SmallConfig();
  config.body_size = 256;
  Csprng rng(30);
  const Model a = synthetic::RandomModel({ModelKind::kXgboost, 2, 4, 4, 3, 0.8, 0}, rng);
  const Model b = synthetic::RandomModel({ModelKind::kXgboost, 2, 4, 7, 4, 0.9, 0}, rng);
  const auto ma = ServerModel::Create(a, config);
  const auto mb = ServerModel::Create(b, config);
  ASSERT_EQ(ma->setup().profiles, mb->setup().profiles);
  Harness ha(ma, 31);
  Harness hb(mb, 32);
  const auto rows = synthetic::RandomRows(a, 5, rng);
  for (const auto& row : rows.rows) {
    const auto sa = Infer(ha.client(), ha.channel(), row).stats;
    const auto sb = Infer(hb.client(), hb.channel(), row).stats;
    EXPECT_EQ(sa.converted_ones, sb.converted_ones);
    EXPECT_EQ(sa.bytes_received, sb.bytes_received);
    EXPECT_EQ(sa.converted_ones[0], config.slot_count / 2);
  }
}

TEST(TransportTest, TcpMatchesInProcess) {
  Csprng rng(40);
  const Model model = synthetic::RandomModel({ModelKind::kXgboost, 3, 3, 6, 3, 0.8, 0}, rng);
  const auto server_model = ServerModel::Create(model, SmallConfig());
  const auto rows = synthetic::RandomRows(model, 6, rng);

  wire::TcpListener listener("127.0.0.1", 0);
  std::thread server_thread([&] {
    auto channel = listener.Accept();
    ServerSession session(server_model, Csprng(41));
    Serve(session, *channel);
    EXPECT_EQ(session.ledger().Snapshot().decryptions, 0u);
  });
  auto tcp = wire::TcpConnect("127.0.0.1", listener.port());
  ClientSession tcp_client(Csprng(42));
  Connect(tcp_client, *tcp);

  Harness local(server_model, 43);
  for (const auto& row : rows.rows) {
    const auto over_tcp = Infer(tcp_client, *tcp, row);
    const auto in_process = Infer(local.client(), local.channel(), row);
    EXPECT_EQ(over_tcp.scores, in_process.scores);
    EXPECT_EQ(over_tcp.predicted_class, in_process.predicted_class);
    EXPECT_EQ(over_tcp.stats.exchanges, 3u);
  }
  tcp->Close();
  server_thread.join();
}

}  // namespace
}  // namespace treecloak::protocol
