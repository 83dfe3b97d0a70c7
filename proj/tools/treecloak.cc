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

// Operator CLI: server, client, optimize and bench subcommands. Every
// subcommand writes JSON lines to --report (stdout by default) and exits
// non-zero on any error.

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "treecloak/clustering.h"
#include "treecloak/dataset.h"
#include "treecloak/encoding.h"
#include "treecloak/error.h"
#include "treecloak/forest.h"
#include "treecloak/protocol.h"
#include "treecloak/random.h"
#include "treecloak/wire.h"

namespace treecloak::cli {
namespace {

using nlohmann::ordered_json;

struct RunConfig {
  protocol::ServerConfig server;
  double intensity = clustering::kDefaultIntensity;
  double tolerance = 0.0;
  std::optional<std::uint64_t> seed;
  std::string listen = "127.0.0.1:7878";
  std::string connect;
  std::string report;
};

// Flags as given on the command line; unset ones fall back to the config
// file and then to the defaults.
struct Overrides {
  std::string config_path;
  std::optional<std::size_t> slot_count;
  std::optional<std::uint64_t> modulus_floor;
  std::optional<int> bitwidth;
  std::optional<std::size_t> body_size;
  std::optional<double> intensity;
  std::optional<double> tolerance;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> listen;
  std::optional<std::string> connect;
  std::optional<std::string> report;
};

RunConfig LoadConfig(const Overrides& o) {
  RunConfig cfg;
  if (!o.config_path.empty()) {
    ordered_json doc;
    try {
      doc = ordered_json::parse(ReadFile(o.config_path));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kSchema, "config: " + std::string(e.what()));
    }
    if (!doc.is_object()) throw Error(ErrorCode::kSchema, "config must be a JSON object");
    try {
      for (const auto& [key, value] : doc.items()) {
        if (key == "slot_count") cfg.server.slot_count = value.get<std::size_t>();
        else if (key == "modulus_floor") cfg.server.modulus_floor = value.get<std::uint64_t>();
        else if (key == "depth_budget") cfg.server.depth_budget = value.get<int>();
        else if (key == "bitwidth") cfg.server.bitwidth = value.get<int>();
        else if (key == "body_size") cfg.server.body_size = value.get<std::size_t>();
        else if (key == "intensity") cfg.intensity = value.get<double>();
        else if (key == "tolerance") cfg.tolerance = value.get<double>();
        else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
        else if (key == "listen") cfg.listen = value.get<std::string>();
        else if (key == "connect") cfg.connect = value.get<std::string>();
        else if (key == "report") cfg.report = value.get<std::string>();
        else throw Error(ErrorCode::kSchema, "config: unknown key '" + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kSchema, "config: " + std::string(e.what()));
    }
  }
  if (o.slot_count) cfg.server.slot_count = *o.slot_count;
  if (o.modulus_floor) cfg.server.modulus_floor = *o.modulus_floor;
  if (o.bitwidth) cfg.server.bitwidth = *o.bitwidth;
  if (o.body_size) cfg.server.body_size = *o.body_size;
  if (o.intensity) cfg.intensity = *o.intensity;
  if (o.tolerance) cfg.tolerance = *o.tolerance;
  if (o.seed) cfg.seed = *o.seed;
  if (o.listen) cfg.listen = *o.listen;
  if (o.connect) cfg.connect = *o.connect;
  if (o.report) cfg.report = *o.report;
  const int bw = cfg.server.bitwidth;
  if (bw != 8 && bw != 16 && bw != 32) {
    throw Error(ErrorCode::kInvalidArgument, "bitwidth must be 8, 16 or 32");
  }
  return cfg;
}

Csprng MakeRng(const RunConfig& cfg, std::uint64_t stream) {
  return cfg.seed ? Csprng(*cfg.seed ^ (stream * 0x9e3779b97f4a7c15ULL)) : Csprng::FromEntropy();
}

// Serialized JSON-lines sink shared by worker threads.
class Reporter {
 public:
  explicit Reporter(const std::string& path) {
    if (!path.empty()) {
      file_.open(path, std::ios::out | std::ios::trunc);
      if (!file_) throw Error(ErrorCode::kIo, "cannot open report file " + path);
    }
  }
  void Emit(const ordered_json& line) {
    std::lock_guard lock(mu_);
    std::ostream& out = file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout;
    out << line.dump() << '\n';
    out.flush();
  }

 private:
  std::mutex mu_;
  std::ofstream file_;
};

ordered_json LedgerJson(const fhe::LedgerSnapshot& s) {
  return {{"row_rotations", s.row_rotations},   {"column_rotations", s.column_rotations},
          {"cipher_mults", s.cipher_mults},     {"plain_mults", s.plain_mults},
          {"additions", s.additions},           {"encryptions", s.encryptions},
          {"decryptions", s.decryptions},       {"max_depth", s.max_depth}};
}

ordered_json SetupJson(const protocol::ServerModel& model) {
  ordered_json groups = ordered_json::array();
  for (const auto& g : model.pack().groups) {
    groups.push_back({{"trees", g.tree_count()},
                      {"paths", g.path_count},
                      {"clusters", g.cluster_count()},
                      {"body_size", g.body_size}});
  }
  const auto& layout = model.layout();
  return {{"slot_count", model.params().slot_count},
          {"plain_modulus", model.params().plain_modulus},
          {"bitwidth", layout.bitwidth()},
          {"repetition", layout.repetition()},
          {"planes", layout.plane_count()},
          {"query_ciphertexts", layout.compressed_count()},
          {"plan_size", model.plan().size()},
          {"paths", model.paths().path_count()},
          {"groups", groups}};
}

forest::Model LoadModel(const std::string& path) { return forest::ParseModel(ReadFile(path)); }

ordered_json InferenceJson(std::size_t row, const protocol::InferenceResult& r,
                           const Dataset& data) {
  ordered_json line = {{"event", "inference"},
                       {"row", row},
                       {"query_id", r.query_id},
                       {"scores", r.scores},
                       {"predicted_class", r.predicted_class}};
  if (data.has_labels()) line["label"] = data.labels[row];
  line["exchanges"] = r.stats.exchanges;
  line["bytes_sent"] = r.stats.bytes_sent;
  line["bytes_received"] = r.stats.bytes_received;
  line["query_ciphertexts"] = r.stats.query_ciphertexts;
  line["converted_ones"] = r.stats.converted_ones;
  return line;
}

int RunServer(const RunConfig& cfg, const std::string& model_path, std::size_t max_sessions,
              const std::string& port_file) {
  Reporter report(cfg.report);
  const auto model = protocol::ServerModel::Create(LoadModel(model_path), cfg.server);
  const auto [host, port] = wire::ParseEndpoint(cfg.listen);
  wire::TcpListener listener(host, port);
  if (!port_file.empty()) WriteFile(port_file, std::to_string(listener.port()) + "\n");
  ordered_json start = {{"event", "listening"}, {"port", listener.port()}};
  start["setup"] = SetupJson(*model);
  report.Emit(start);

  Csprng root = MakeRng(cfg, 1);
  std::vector<std::thread> workers;
  for (std::size_t session = 0; max_sessions == 0 || session < max_sessions; ++session) {
    auto channel = std::shared_ptr<wire::TcpChannel>(listener.Accept());
    workers.emplace_back([&report, model, channel, session, rng = root.Fork()]() mutable {
      protocol::ServerSession state(model, std::move(rng));
      ordered_json done = {{"event", "session_closed"}, {"session", session}};
      try {
        protocol::Serve(state, *channel);
      } catch (const Error& e) {
        done["error"] = e.what();
      }
      done["ledger"] = LedgerJson(state.ledger().Snapshot());
      report.Emit(done);
    });
  }
  for (auto& w : workers) w.join();
  return 0;
}

int RunClient(const RunConfig& cfg, const std::string& queries_path,
              const std::string& model_path) {
  Reporter report(cfg.report);
  const Dataset queries = LoadCsv(queries_path);

  std::unique_ptr<wire::Channel> channel;
  std::thread local_server;
  std::unique_ptr<wire::Channel> server_end;
  if (!cfg.connect.empty()) {
    const auto [host, port] = wire::ParseEndpoint(cfg.connect);
    channel = wire::TcpConnect(host, port);
  } else {
    if (model_path.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "client needs --connect or --model");
    }
    auto model = protocol::ServerModel::Create(LoadModel(model_path), cfg.server);
    auto pair = wire::MakeInProcessPair();
    channel = std::move(pair.client);
    server_end = std::move(pair.server);
    local_server = std::thread([model, end = server_end.get(), rng = MakeRng(cfg, 1)]() mutable {
      protocol::ServerSession state(model, std::move(rng));
      protocol::Serve(state, *end);
    });
  }

  int status = 0;
  try {
    protocol::ClientSession client(MakeRng(cfg, 2));
    protocol::Connect(client, *channel);
    std::vector<std::string> names;
    for (const auto& f : client.setup().features) names.push_back(f.name);
    const Dataset ordered = queries.Select(names);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ordered.size(); ++i) {
      const auto result = protocol::Infer(client, *channel, ordered.rows[i]);
      if (ordered.has_labels() && result.predicted_class == ordered.labels[i]) ++correct;
      report.Emit(InferenceJson(i, result, ordered));
    }
    ordered_json summary = {{"event", "summary"}, {"queries", ordered.size()}};
    if (ordered.has_labels() && ordered.size() > 0) {
      summary["accuracy"] = static_cast<double>(correct) / static_cast<double>(ordered.size());
    }
    summary["client_ledger"] = LedgerJson(client.ledger().Snapshot());
    report.Emit(summary);
  } catch (...) {
    channel->Close();
    if (local_server.joinable()) local_server.join();
    throw;
  }
  channel->Close();
  if (local_server.joinable()) local_server.join();
  return status;
}

int RunOptimize(const RunConfig& cfg, const std::string& model_path,
                const std::string& validation_path, const std::string& out_path) {
  Reporter report(cfg.report);
  const std::string original = ReadFile(model_path);
  const forest::Model model = forest::ParseModel(original);
  const Dataset validation = LoadCsv(validation_path).Select(model.feature_names());
  clustering::ClusterConfig config;
  config.intensity = cfg.intensity;
  config.tolerance = cfg.tolerance;
  config.bitwidth = cfg.server.bitwidth;
  const auto result = clustering::ClusterNodes(model, config, validation);
  // With nothing merged the input is passed through untouched.
  const bool unchanged = result.report.node_clusters == 0;
  WriteFile(out_path, unchanged ? original : forest::SerializeModel(result.model));
  ordered_json line = {{"event", "optimize"}, {"intensity", cfg.intensity}};
  line["report"] = ordered_json::parse(result.report.ToJson());
  report.Emit(line);
  return 0;
}

int RunBench(const RunConfig& cfg, const std::string& model_path,
             const std::string& queries_path) {
  using wire::EncodeFrame;
  Reporter report(cfg.report);
  const auto model = protocol::ServerModel::Create(LoadModel(model_path), cfg.server);
  protocol::ServerSession server(model, MakeRng(cfg, 1));
  protocol::ClientSession client(MakeRng(cfg, 2));
  const auto setup_request = client.SetupRequest();
  const auto setup_response = server.Handle(setup_request);
  client.AcceptSetup(setup_response);
  const Dataset queries = LoadCsv(queries_path).Select(model->forest().feature_names());

  ordered_json header = {{"event", "setup"},
                         {"setup_bytes", EncodeFrame(setup_request).size() +
                                             EncodeFrame(setup_response).size()}};
  header["setup"] = SetupJson(*model);
  report.Emit(header);

  // An uncompressed query under a throwaway key, for the size comparison.
  Csprng side_rng = MakeRng(cfg, 3);
  const auto side_keys = fhe::GenerateKeys(model->params(), side_rng);
  const fhe::Decryptor side(side_keys.secret, std::make_shared<fhe::OpLedger>());

  std::size_t agree = 0;
  double wall_total = 0.0;
  std::size_t compressed_total = 0;
  std::size_t uncompressed_total = 0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& row = queries.rows[i];
    const auto start = std::chrono::steady_clock::now();
    const auto query = client.Query(row);
    const auto challenge = server.Handle(query);
    if (challenge.type == wire::MessageType::kError) protocol::ThrowRemoteError(challenge);
    const auto response = client.RespondToChallenge(challenge);
    const auto result_frame = server.Handle(response);
    const auto result = client.ReadResult(result_frame);
    const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - start;
    wall_total += wall.count();

    const auto x = forest::QuantizeRow(model->forest(), row);
    const auto expected = forest::Scores(model->forest(), x);
    const bool match = expected == result.scores;
    agree += match ? 1 : 0;

    encoding::FeatureValues values;
    const auto& features = model->forest().features;
    for (std::size_t f = 0; f < features.size(); ++f) values[features[f].name] = x[f];
    std::size_t uncompressed = 0;
    for (const auto& c : encoding::PackQuery(values, model->layout(), side)) {
      uncompressed += c.SerializedSize();
    }
    compressed_total += result.stats.query_bytes;
    uncompressed_total += uncompressed;

    ordered_json phases = ordered_json::array();
    for (const auto& cost : server.last_costs()) {
      ordered_json p = {{"phase", cost.name}, {"seconds", cost.seconds}};
      p["ops"] = LedgerJson(cost.ops);
      phases.push_back(p);
    }
    ordered_json bytes = {{"query_frame", EncodeFrame(query).size()},
                          {"key", result.stats.key_bytes},
                          {"query_ciphertexts", result.stats.query_bytes},
                          {"query_uncompressed", uncompressed},
                          {"challenge_frame", EncodeFrame(challenge).size()},
                          {"response_frame", EncodeFrame(response).size()},
                          {"result_frame", EncodeFrame(result_frame).size()}};
    ordered_json line = {{"event", "query"},
                         {"row", i},
                         {"scores", result.scores},
                         {"predicted_class", result.predicted_class},
                         {"matches_plaintext", match},
                         {"wall_seconds", wall.count()}};
    line["bytes"] = bytes;
    line["phases"] = phases;
    report.Emit(line);
  }
  ordered_json summary = {{"event", "summary"},
                          {"queries", queries.size()},
                          {"matches_plaintext", agree},
                          {"wall_seconds", wall_total},
                          {"query_bytes_compressed", compressed_total},
                          {"query_bytes_uncompressed", uncompressed_total}};
  if (uncompressed_total > 0) {
    summary["compression_ratio"] =
        static_cast<double>(compressed_total) / static_cast<double>(uncompressed_total);
    summary["inverse_repetition"] = 1.0 / static_cast<double>(model->layout().repetition());
  }
  summary["server_ledger"] = LedgerJson(server.ledger().Snapshot());
  summary["client_ledger"] = LedgerJson(client.ledger().Snapshot());
  report.Emit(summary);
  return 0;
}

void AddCommon(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app->add_option("--seed", o.seed, "RNG seed for reproducible runs");
  app->add_option("--bitwidth", o.bitwidth, "Feature bitwidth (8, 16 or 32)");
  app->add_option("--report", o.report, "JSON-lines report path (default stdout)");
}

void AddFhe(CLI::App* app, Overrides& o) {
  app->add_option("--slots", o.slot_count, "Slot count N (power of two)");
  app->add_option("--modulus-floor", o.modulus_floor, "Plaintext modulus lower bound");
  app->add_option("--body-size", o.body_size, "Fixed padded body length for every group");
}

}  // namespace

int Main(int argc, char** argv) {
  CLI::App app{"Private inference for gradient-boosted forests"};
  app.require_subcommand(1);

  Overrides o;
  std::string model_path;
  std::string queries_path;
  std::string validation_path;
  std::string out_path;
  std::string port_file;
  std::size_t max_sessions = 0;

  auto* server = app.add_subcommand("server", "Serve a model over TCP");
  AddCommon(server, o);
  AddFhe(server, o);
  server->add_option("--model", model_path, "Model JSON")->required()->check(CLI::ExistingFile);
  server->add_option("--listen", o.listen, "host:port to listen on (port 0 picks one)");
  server->add_option("--max-sessions", max_sessions, "Exit after this many sessions (0 = never)");
  server->add_option("--port-file", port_file, "Write the bound port here");

  auto* client = app.add_subcommand("client", "Run private queries against a server");
  AddCommon(client, o);
  AddFhe(client, o);
  client->add_option("--queries", queries_path, "CSV of query rows")->required()
      ->check(CLI::ExistingFile);
  client->add_option("--connect", o.connect, "host:port of a running server");
  client->add_option("--model", model_path, "Model JSON for an in-process server")
      ->check(CLI::ExistingFile);

  auto* optimize = app.add_subcommand("optimize", "Cluster node thresholds");
  AddCommon(optimize, o);
  optimize->add_option("--model", model_path, "Model JSON")->required()->check(CLI::ExistingFile);
  optimize->add_option("--validation", validation_path, "Labelled validation CSV")->required()
      ->check(CLI::ExistingFile);
  optimize->add_option("--intensity", o.intensity, "Clustering intensity t in [0, 1]");
  optimize->add_option("--tolerance", o.tolerance, "Allowed validation accuracy drop");
  optimize->add_option("--out", out_path, "Output model JSON")->required();

  auto* bench = app.add_subcommand("bench", "Per-phase cost and size report");
  AddCommon(bench, o);
  AddFhe(bench, o);
  bench->add_option("--model", model_path, "Model JSON")->required()->check(CLI::ExistingFile);
  bench->add_option("--queries", queries_path, "CSV of query rows")->required()
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    const RunConfig cfg = LoadConfig(o);
    if (server->parsed()) return RunServer(cfg, model_path, max_sessions, port_file);
    if (client->parsed()) return RunClient(cfg, queries_path, model_path);
    if (optimize->parsed()) return RunOptimize(cfg, model_path, validation_path, out_path);
    return RunBench(cfg, model_path, queries_path);
  } catch (const Error& e) {
    std::cerr << ordered_json{{"event", "error"}, {"code", ErrorCodeName(e.code())},
                              {"message", e.what()}}
                     .dump()
              << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << ordered_json{{"event", "error"}, {"code", "internal"}, {"message", e.what()}}
                     .dump()
              << '\n';
    return 1;
  }
}

}  // namespace treecloak::cli

int main(int argc, char** argv) { return treecloak::cli::Main(argc, argv); }
