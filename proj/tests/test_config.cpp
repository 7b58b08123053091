#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "splitnn/config.hpp"
#include "splitnn/error.hpp"

using namespace splitnn;
using nlohmann::json;

namespace {

json minimal() { return json{{"model", {{"dims", {2, 4, 3}}}}}; }

std::string config_error(const json& j) {
  try {
    config_from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

class ScopedEnv {
 public:
  ScopedEnv(const char* name, const char* value) : name_(name) { ::setenv(name, value, 1); }
  ~ScopedEnv() { ::unsetenv(name_); }

 private:
  const char* name_;
};

}  // namespace

TEST(Config, DefaultsFromMinimal) {
  const auto cfg = config_from_json(minimal());
  EXPECT_EQ(cfg.model.dims, (std::vector<std::size_t>{2, 4, 3}));
  EXPECT_EQ(cfg.model.learning_rate, 0.1);
  EXPECT_EQ(cfg.partition_weights, std::vector<double>{1.0});
  EXPECT_EQ(cfg.sync, SyncPolicy::none());
  EXPECT_EQ(cfg.transport, TransportKind::loopback);
  EXPECT_EQ(cfg.timeout, kDefaultTimeout);
}

TEST(Config, RoundTripThroughJsonAndFile) {
  json j = minimal();
  j["model"]["precision"] = "f32";
  j["model"]["activation"] = "tanh";
  j["data"] = {{"partition_weights", {1, 2, 7}}, {"synthetic", {{"n", 300}, {"spread", 0.25}}}};
  j["training"] = {{"epochs", 4}, {"global_batch", 30}, {"sync", {{"policy", "average_every"}, {"rounds", 5}}}};
  j["transport"] = {{"kind", "tcp"}, {"addr", "127.0.0.1:9000"}, {"timeout_ms", 1500}};
  const auto cfg = config_from_json(j);
  EXPECT_EQ(config_from_json(config_to_json(cfg)), cfg);
  const auto path = std::filesystem::temp_directory_path() / "splitnn_cfg.json";
  save_config(cfg, path);
  EXPECT_EQ(load_config(path), cfg);
}

TEST(Config, ErrorsNameTheKey) {
  EXPECT_NE(config_error(json{{"model", json::object()}}).find("model.dims"), std::string::npos);
  json j = minimal();
  j["model"]["dims"] = {2, 3};
  EXPECT_NE(config_error(j).find("model"), std::string::npos);
  j = minimal();
  j["model"]["bogus"] = 1;
  EXPECT_NE(config_error(j).find("model.bogus"), std::string::npos);
  j = minimal();
  j["training"] = {{"global_batch", 1}};
  j["data"] = {{"partition_weights", {1, 1}}};
  EXPECT_NE(config_error(j).find("training.global_batch"), std::string::npos);
  j = minimal();
  j["training"] = {{"sync", {{"policy", "sometimes"}}}};
  EXPECT_NE(config_error(j).find("training.sync.policy"), std::string::npos);
  j = minimal();
  j["model"]["lr"] = "fast";
  EXPECT_NE(config_error(j).find("model.lr"), std::string::npos);
  j = minimal();
  j["data"] = {{"synthetic", {{"classes", 5}}}};
  EXPECT_NE(config_error(j).find("data.synthetic.classes"), std::string::npos);
  j = minimal();
  j["transport"] = {{"addr", "host:notaport"}};
  EXPECT_FALSE(config_error(j).empty());
}

TEST(Config, ParseErrorsCarryPosition) {
  const auto path = std::filesystem::temp_directory_path() / "splitnn_bad.json";
  std::ofstream(path) << "{\n  \"model\": {\"dims\": [2, 3, 2],}\n}\n";
  try {
    load_config(path);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, SyncPolicyText) {
  EXPECT_EQ(parse_sync_policy("none"), SyncPolicy::none());
  EXPECT_EQ(parse_sync_policy("average_every:5"), SyncPolicy::average_every(5));
  EXPECT_EQ(to_string(SyncPolicy::average_every(7)), "average_every:7");
  EXPECT_THROW(parse_sync_policy("average_every:0"), ConfigError);
  EXPECT_THROW(parse_sync_policy("average_every"), ConfigError);
}

TEST(Config, EnvironmentSeedThenFlags) {
  auto cfg = config_from_json(minimal());
  {
    ScopedEnv env("SPLITNN_SEED", "1234");
    apply_overrides(cfg, {});
    EXPECT_EQ(cfg.model.seed, 1234u);
    ConfigOverrides flags;
    flags.seed = 99;
    flags.epochs = 3;
    flags.sync = "average_every:2";
    flags.precision = "f32";
    flags.transport = "tcp";
    apply_overrides(cfg, flags);
    EXPECT_EQ(cfg.model.seed, 99u);
    EXPECT_EQ(cfg.epochs, 3u);
    EXPECT_EQ(cfg.sync, SyncPolicy::average_every(2));
    EXPECT_EQ(cfg.model.precision, Precision::f32);
    EXPECT_EQ(cfg.transport, TransportKind::tcp);
  }
  {
    ScopedEnv env("SPLITNN_SEED", "12x");
    EXPECT_THROW(apply_overrides(cfg, {}), ConfigError);
  }
  ConfigOverrides bad;
  bad.global_batch = 0;
  EXPECT_THROW(apply_overrides(cfg, bad), ConfigError);
}
