#pragma once

// Experiment drivers behind the `splitnn` subcommands, plus the artifact
// writers they share (metrics.csv, summary.json, checkpoints).

#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "splitnn/accounting.hpp"
#include "splitnn/config.hpp"
#include "splitnn/data.hpp"
#include "splitnn/session.hpp"

namespace splitnn {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitTransport = 3,
  kExitNumeric = 4,
};

/// Maps a caught exception to the documented process exit code.
int exit_code_for(const std::exception& e) noexcept;

struct PreparedData {
  Dataset full;
  Partition partition;
  std::vector<Dataset> client_data;
};

/// Generates or loads the dataset and partitions it across the configured
/// clients. Shape mismatches against model.dims are ConfigErrors.
PreparedData prepare_data(const ExperimentConfig& cfg);

/// One row per client exchange:
/// epoch,round,client_id,loss,accuracy,bytes_up,bytes_down,cumulative_bytes
/// cumulative_bytes is the running total of bytes_up+bytes_down over the file.
std::string format_metrics_csv(const std::vector<RoundMetrics>& history);
void write_metrics_csv(const std::vector<RoundMetrics>& history, const std::filesystem::path& path);

nlohmann::json layers_to_json(const Layers& layers);
Layers layers_from_json(const nlohmann::json& j);
void write_checkpoint(const Layers& layers, const std::filesystem::path& path);
Layers read_checkpoint(const std::filesystem::path& path);

/// Split training in one process over the configured transport. Writes
/// metrics.csv, summary.json, config.json and checkpoint/ under output_dir.
TrainingResult cmd_train_split(const ExperimentConfig& cfg);

/// Centralized training on the pooled data with the same batch schedule a
/// single split client would see. Same artifacts, byte columns zero.
std::vector<RoundMetrics> cmd_train_central(const ExperimentConfig& cfg);

struct SimulateOptions {
  std::optional<std::uint64_t> batch_size;  // per client; default global_batch / clients
  std::optional<std::uint64_t> clients;     // default: partition weight count
  std::uint64_t rounds = 100;
};

/// Writes bytes_comparison.csv and bytes_summary.json under output_dir.
ComparisonReport cmd_simulate_bytes(const ExperimentConfig& cfg, const SimulateOptions& opts);

struct GenDataOptions {
  std::size_t classes = 3;
  std::size_t dim = 2;
  std::size_t n = 600;
  double spread = 0.5;
  std::uint64_t seed = 1;
  std::filesystem::path out = "data.csv";
};

Dataset cmd_gen_data(const GenDataOptions& opts);

struct ServeResult {
  std::vector<std::size_t> minibatch_sizes;
  std::vector<ByteCounts> client_traffic;  // measured at the server endpoints
  Layers server_layers;
};

/// Binds cfg.addr, waits for one Hello per configured client, then serves
/// the turn schedule until every client finished. `on_listening` receives
/// the bound port (useful with port 0).
ServeResult cmd_serve(const ExperimentConfig& cfg,
                      std::function<void(std::uint16_t)> on_listening = {});

struct JoinResult {
  std::vector<RoundMetrics> history;
  Layers client_layers;
  ByteCounts traffic;
};

/// Runs client `client` against a server started with cmd_serve.
JoinResult cmd_join(const ExperimentConfig& cfg, ClientId client);

}  // namespace splitnn
