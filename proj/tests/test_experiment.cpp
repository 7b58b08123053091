#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>
#include <thread>

#include "splitnn/error.hpp"
#include "splitnn/experiment.hpp"

using namespace splitnn;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "splitnn_experiment" / name;
  fs::remove_all(p);
  return p;
}

ExperimentConfig small_config(const std::string& out) {
  ExperimentConfig cfg;
  cfg.model.dims = {2, 8, 3};
  cfg.model.seed = 21;
  cfg.model.learning_rate = 0.1;
  cfg.partition_weights = {1, 2, 3};
  cfg.synthetic.n = 120;
  cfg.epochs = 3;
  cfg.global_batch = 12;
  cfg.output_dir = fresh_dir(out).string();
  return cfg;
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST(ExitCodes, MapErrorFamilies) {
  EXPECT_EQ(exit_code_for(ConfigError("x")), kExitConfig);
  EXPECT_EQ(exit_code_for(IngestionError("x")), kExitConfig);
  EXPECT_EQ(exit_code_for(AllocationError("x")), kExitConfig);
  EXPECT_EQ(exit_code_for(TimeoutError("x")), kExitTransport);
  EXPECT_EQ(exit_code_for(FramingError("x")), kExitTransport);
  EXPECT_EQ(exit_code_for(ProtocolStateError("x")), kExitTransport);
  EXPECT_EQ(exit_code_for(NumericError("x")), kExitNumeric);
  EXPECT_EQ(exit_code_for(std::runtime_error("x")), kExitFailure);
}

TEST(PrepareData, PartitionsSyntheticData) {
  const auto d = prepare_data(small_config("prep"));
  EXPECT_EQ(d.full.size(), 120u);
  EXPECT_EQ(d.partition.counts(), (std::vector<std::size_t>{20, 40, 60}));
  ASSERT_EQ(d.client_data.size(), 3u);
  EXPECT_EQ(d.client_data[2].size(), 60u);
}

TEST(PrepareData, CsvWidthMustMatchModel) {
  auto cfg = small_config("csvwidth");
  const fs::path csv = fs::path(cfg.output_dir).parent_path() / "w3.csv";
  fs::create_directories(csv.parent_path());
  std::ofstream(csv) << "f0,f1,f2,label\n1,2,3,0\n4,5,6,1\n7,8,9,2\n";
  cfg.source = DataSource::csv;
  cfg.data_path = csv.string();
  cfg.partition_weights = {1};
  cfg.global_batch = 1;
  EXPECT_THROW(prepare_data(cfg), ConfigError);
  cfg.model.dims = {3, 4, 3};
  EXPECT_EQ(prepare_data(cfg).full.size(), 3u);
}

TEST(MetricsCsv, CumulativeBytes) {
  std::vector<RoundMetrics> h(2);
  h[0].client_id = 0, h[0].loss = 0.5, h[0].correct = 1, h[0].batch_size = 2;
  h[0].traffic.bytes_up = 10, h[0].traffic.bytes_down = 20;
  h[1].client_id = 1, h[1].round = 0, h[1].loss = 0.25, h[1].correct = 4, h[1].batch_size = 4;
  h[1].traffic.bytes_up = 1, h[1].traffic.bytes_down = 2;
  EXPECT_EQ(format_metrics_csv(h),
            "epoch,round,client_id,loss,accuracy,bytes_up,bytes_down,cumulative_bytes\n"
            "0,0,0,0.5,0.5,10,20,30\n"
            "0,0,1,0.25,1,1,2,33\n");
}

TEST(Checkpoint, RoundTripIsBitwise) {
  ModelSpec s;
  s.dims = {3, 5, 2};
  s.seed = 4;
  s.hidden_activation = Activation::tanh;
  const Layers layers = init_model(s);
  const fs::path p = fresh_dir("ckpt");
  fs::create_directories(p);
  write_checkpoint(layers, p / "m.json");
  EXPECT_EQ(read_checkpoint(p / "m.json"), layers);
}

TEST(TrainSplit, WritesArtifacts) {
  const auto cfg = small_config("split");
  const auto result = cmd_train_split(cfg);
  const fs::path out = cfg.output_dir;
  for (const char* f : {"metrics.csv", "summary.json", "config.json", "checkpoint/server.json",
                        "checkpoint/client_0.json", "checkpoint/client_2.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const auto lines = lines_of(out / "metrics.csv");
  EXPECT_EQ(lines.size(), result.history.size() + 1);
  EXPECT_EQ(load_config(out / "config.json"), cfg);
  std::ifstream in(out / "summary.json");
  const auto summary = nlohmann::json::parse(in);
  EXPECT_EQ(summary.at("total_bytes").get<std::uint64_t>(), result.total_traffic.bytes_total());
  EXPECT_EQ(summary.at("minibatch_sizes").get<std::vector<std::size_t>>(), result.minibatch_sizes);
  EXPECT_EQ(read_checkpoint(out / "checkpoint" / "server.json"), result.server_layers);
  // Last cumulative_bytes equals the total over every link.
  const auto last = lines.back();
  EXPECT_EQ(last.substr(last.rfind(',') + 1), std::to_string(result.total_traffic.bytes_total()));
}

TEST(TrainCentral, PooledBatchesAndZeroBytes) {
  auto cfg = small_config("central");
  const auto h = cmd_train_central(cfg);
  // 120 samples, batch 12 -> 10 steps per epoch.
  EXPECT_EQ(h.size(), 30u);
  for (const auto& m : h) {
    EXPECT_EQ(m.batch_size, 12u);
    EXPECT_EQ(m.traffic.bytes_total(), 0u);
  }
  EXPECT_TRUE(fs::exists(fs::path(cfg.output_dir) / "checkpoint" / "central.json"));
}

TEST(SimulateBytes, WritesReport) {
  auto cfg = small_config("simulate");
  cfg.model.dims = {784, 128, 64, 10};
  cfg.model.precision = Precision::f32;
  cfg.synthetic.n = 600;
  cfg.partition_weights = {1};
  cfg.global_batch = 32;
  const auto r = cmd_simulate_bytes(cfg, {.batch_size = std::nullopt, .clients = std::nullopt, .rounds = 5});
  EXPECT_EQ(r.split_round_payload, 35'328u);
  EXPECT_EQ(r.winner, Winner::split);
  EXPECT_EQ(lines_of(fs::path(cfg.output_dir) / "bytes_comparison.csv").size(), 11u);
  EXPECT_TRUE(fs::exists(fs::path(cfg.output_dir) / "bytes_summary.json"));
}

TEST(GenData, WritesCsv) {
  const fs::path out = fresh_dir("gen") / "d.csv";
  const auto d = cmd_gen_data({.classes = 4, .dim = 3, .n = 40, .spread = 0.2, .seed = 5, .out = out});
  const auto back = load_csv(out);
  EXPECT_EQ(back.X, d.X);
  EXPECT_EQ(back.labels, d.labels);
}

TEST(ServeJoin, ThreadsReproduceInProcessTraining) {
  auto cfg = small_config("deploy_ref");
  cfg.transport = TransportKind::tcp;
  cfg.addr = "127.0.0.1:0";
  cfg.timeout = std::chrono::seconds(10);
  const auto reference = cmd_train_split(cfg);

  auto server_cfg = cfg;
  server_cfg.output_dir = fresh_dir("deploy_server").string();
  std::promise<std::uint16_t> port_promise;
  auto server = std::async(std::launch::async, [&] {
    return cmd_serve(server_cfg, [&](std::uint16_t p) { port_promise.set_value(p); });
  });
  const std::uint16_t port = port_promise.get_future().get();

  std::vector<std::future<JoinResult>> joins;
  for (ClientId k : {2u, 0u, 1u}) {
    auto client_cfg = cfg;
    client_cfg.addr = "127.0.0.1:" + std::to_string(port);
    client_cfg.output_dir = fresh_dir("deploy_client_" + std::to_string(k)).string();
    joins.push_back(std::async(std::launch::async, [client_cfg, k] { return cmd_join(client_cfg, k); }));
  }
  std::vector<JoinResult> results;
  for (auto& j : joins) results.push_back(j.get());
  const ServeResult served = server.get();

  EXPECT_EQ(served.server_layers, reference.server_layers);
  EXPECT_EQ(served.minibatch_sizes, reference.minibatch_sizes);
  const std::vector<ClientId> ids{2, 0, 1};
  for (std::size_t i = 0; i < 3; ++i) {
    const ClientId k = ids[i];
    EXPECT_EQ(results[i].client_layers, reference.client_layers[k]);
    std::vector<RoundMetrics> ref_rows;
    for (const auto& m : reference.history)
      if (m.client_id == k) ref_rows.push_back(m);
    ASSERT_EQ(results[i].history.size(), ref_rows.size());
    for (std::size_t r = 0; r < ref_rows.size(); ++r) {
      EXPECT_EQ(results[i].history[r].loss, ref_rows[r].loss);
      EXPECT_EQ(results[i].history[r].epoch, ref_rows[r].epoch);
      EXPECT_EQ(results[i].history[r].round, ref_rows[r].round);
      EXPECT_EQ(results[i].history[r].traffic.bytes_total(), ref_rows[r].traffic.bytes_total());
    }
    // Control frames on top of the data frames: Hello, ConfigDown, one EpochEnd per epoch.
    const std::uint64_t control = (2 + cfg.epochs) * (kHeaderBytes + kTcpPrefixBytes);
    EXPECT_EQ(results[i].traffic.bytes_total(), reference.client_traffic[k].bytes_total() + control);
  }
}

TEST(ServeJoin, AveragingIsRejected) {
  auto cfg = small_config("deploy_sync");
  cfg.sync = SyncPolicy::average_every(2);
  EXPECT_THROW(cmd_serve(cfg), ConfigError);
  EXPECT_THROW(cmd_join(cfg, 0), ConfigError);
}

TEST(ServeJoin, JoinWithoutServerTimesOut) {
  auto cfg = small_config("deploy_none");
  cfg.addr = "127.0.0.1:1";
  cfg.timeout = std::chrono::milliseconds(100);
  try {
    cmd_join(cfg, 0);
    FAIL();
  } catch (const std::exception& e) {
    EXPECT_EQ(exit_code_for(e), kExitTransport);
  }
  EXPECT_THROW(cmd_join(cfg, 7), ConfigError);
}
