// splitnn: command-line front end for split training experiments.

#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "splitnn/error.hpp"
#include "splitnn/experiment.hpp"

namespace {

using namespace splitnn;

struct CommonFlags {
  std::string config_path;
  ConfigOverrides overrides;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool config_required) {
  auto* opt = cmd->add_option("-c,--config", f.config_path, "experiment config (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--seed", f.overrides.seed, "base seed (overrides SPLITNN_SEED)");
  cmd->add_option("--epochs", f.overrides.epochs, "training epochs");
  cmd->add_option("--global-batch", f.overrides.global_batch, "global minibatch size B");
  cmd->add_option("--lr", f.overrides.lr, "learning rate");
  cmd->add_option("--precision", f.overrides.precision, "wire precision: f32 or f64");
  cmd->add_option("--transport", f.overrides.transport, "loopback or tcp");
  cmd->add_option("--addr", f.overrides.addr, "host:port for tcp");
  cmd->add_option("--timeout-ms", f.overrides.timeout_ms, "per-message receive timeout");
  cmd->add_option("--out", f.overrides.output_dir, "output directory");
  cmd->add_option("--sync", f.overrides.sync, "none or average_every:R");
}

ExperimentConfig resolve(const CommonFlags& f) {
  ExperimentConfig cfg = load_config(f.config_path);
  apply_overrides(cfg, f.overrides);
  return cfg;
}

void print_epochs(const std::vector<RoundMetrics>& history) {
  for (const auto& e : summarize_epochs(history)) {
    std::printf("epoch %zu  loss %.6f  accuracy %.4f\n", e.epoch, e.mean_loss, e.accuracy);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Split neural network training over loopback or TCP"};
  app.require_subcommand(1);

  CommonFlags split_flags, central_flags, sim_flags, serve_flags, join_flags;

  auto* train_split = app.add_subcommand("train-split", "split training in one process");
  add_common(train_split, split_flags, true);

  auto* train_central = app.add_subcommand("train-central", "centralized baseline on pooled data");
  add_common(train_central, central_flags, true);

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate-bytes", "compare split vs parameter-exchange traffic");
  add_common(simulate, sim_flags, true);
  simulate->add_option("--batch-size", sim.batch_size, "per-client batch size s");
  simulate->add_option("--clients", sim.clients, "number of clients");
  simulate->add_option("--rounds", sim.rounds, "rounds to tabulate");

  GenDataOptions gen;
  auto* gen_data = app.add_subcommand("gen-data", "write a synthetic blobs CSV");
  gen_data->add_option("--classes", gen.classes)->check(CLI::PositiveNumber);
  gen_data->add_option("--dim", gen.dim)->check(CLI::PositiveNumber);
  gen_data->add_option("-n,--samples", gen.n)->check(CLI::PositiveNumber);
  gen_data->add_option("--spread", gen.spread);
  gen_data->add_option("--seed", gen.seed);
  gen_data->add_option("-o,--out", gen.out);

  auto* serve = app.add_subcommand("serve", "run the server over TCP");
  add_common(serve, serve_flags, true);

  ClientId client_id = 0;
  auto* join = app.add_subcommand("join", "run one client against a serve process");
  add_common(join, join_flags, true);
  join->add_option("--client-id", client_id, "which partition this client owns")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train_split) {
      auto result = cmd_train_split(resolve(split_flags));
      print_epochs(result.history);
      std::printf("total bytes %llu\n",
                  static_cast<unsigned long long>(result.total_traffic.bytes_total()));
    } else if (*train_central) {
      print_epochs(cmd_train_central(resolve(central_flags)));
    } else if (*simulate) {
      auto report = cmd_simulate_bytes(resolve(sim_flags), sim);
      std::cout << report_summary(report).dump(2) << '\n';
    } else if (*gen_data) {
      auto d = cmd_gen_data(gen);
      std::printf("wrote %zu samples to %s\n", d.size(), gen.out.string().c_str());
    } else if (*serve) {
      auto cfg = resolve(serve_flags);
      auto result = cmd_serve(cfg, [](std::uint16_t port) {
        std::printf("listening on port %u\n", static_cast<unsigned>(port));
        std::fflush(stdout);
      });
      std::printf("served %zu clients\n", result.client_traffic.size());
    } else if (*join) {
      auto result = cmd_join(resolve(join_flags), client_id);
      print_epochs(result.history);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "splitnn: %s\n", e.what());
    return exit_code_for(e);
  }
  return kExitOk;
}
