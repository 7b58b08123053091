#pragma once

// Experiment configuration. Stored as JSON:
//
// {
//   "model":     {"dims": [2, 16, 3], "activation": "relu", "lr": 0.1,
//                 "seed": 7, "precision": "f64", "split_index": 1},
//   "data":      {"source": "synthetic", "path": "",
//                 "partition_weights": [1, 2, 7],
//                 "synthetic": {"classes": 3, "dim": 2, "n": 600, "spread": 0.5}},
//   "training":  {"epochs": 50, "global_batch": 30,
//                 "sync": {"policy": "average_every", "rounds": 5}},
//   "transport": {"kind": "loopback", "addr": "127.0.0.1:7470", "timeout_ms": 30000},
//   "output":    {"directory": "runs/example"}
// }
//
// Everything except model.dims has a default. Unknown keys are rejected.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "splitnn/nn.hpp"
#include "splitnn/nodes.hpp"
#include "splitnn/session.hpp"

namespace splitnn {

enum class DataSource { synthetic, csv };

struct SyntheticData {
  std::size_t classes = 0;  // 0: take d_k
  std::size_t dim = 0;      // 0: take d_0
  std::size_t n = 600;
  double spread = 0.5;
  friend bool operator==(const SyntheticData&, const SyntheticData&) = default;
};

struct ExperimentConfig {
  ModelSpec model;

  DataSource source = DataSource::synthetic;
  std::string data_path;
  std::vector<double> partition_weights{1.0};
  SyntheticData synthetic;

  std::size_t epochs = 10;
  std::size_t global_batch = 32;
  SyncPolicy sync;

  TransportKind transport = TransportKind::loopback;
  std::string addr = "127.0.0.1:7470";
  std::chrono::milliseconds timeout = kDefaultTimeout;

  std::string output_dir = "out";

  std::size_t client_count() const noexcept { return partition_weights.size(); }

  /// Cross-field checks. Throws ConfigError naming the offending key.
  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Throws ConfigError with the JSON path (or parser line/column) at fault.
ExperimentConfig config_from_json(const nlohmann::json& j);
/// Normalized form: every key present, defaults filled in.
nlohmann::json config_to_json(const ExperimentConfig& cfg);

ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path);

/// Command-line overrides; unset fields leave the config alone.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> global_batch;
  std::optional<double> lr;
  std::optional<std::string> precision;
  std::optional<std::string> transport;
  std::optional<std::string> addr;
  std::optional<long long> timeout_ms;
  std::optional<std::string> output_dir;
  std::optional<std::string> sync;  // "none" or "average_every:R"
};

/// Applies SPLITNN_SEED (if set) and then the flags; flags win. Validates.
void apply_overrides(ExperimentConfig& cfg, const ConfigOverrides& flags);

SyncPolicy parse_sync_policy(const std::string& text);
std::string to_string(const SyncPolicy& policy);

}  // namespace splitnn
