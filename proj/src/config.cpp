#include "splitnn/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "splitnn/error.hpp"

namespace splitnn {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

void reject_unknown(const json& obj, const std::string& path, std::set<std::string> allowed) {
  if (!obj.is_object()) fail(path, "expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.contains(key)) fail(path + "." + key, "unknown key");
  }
}

template <class T>
T read(const json& obj, const std::string& parent, const char* key, T fallback) {
  const std::string path = parent + "." + key;
  if (!obj.contains(key)) return fallback;
  try {
    if constexpr (std::is_unsigned_v<T>) {
      const json& v = obj.at(key);
      if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0)) {
        fail(path, "expected a non-negative integer");
      }
    } else if constexpr (std::is_integral_v<T>) {
      if (!obj.at(key).is_number_integer()) fail(path, "expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!obj.at(key).is_number()) fail(path, "expected a number");
    }
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(path, e.what());
  }
}

const json& section(const json& root, const char* key) {
  static const json empty = json::object();
  return root.contains(key) ? root.at(key) : empty;
}

}  // namespace

SyncPolicy parse_sync_policy(const std::string& text) {
  if (text == "none") return SyncPolicy::none();
  const std::string prefix = "average_every:";
  if (text.starts_with(prefix)) {
    std::size_t rounds = 0;
    const char* first = text.data() + prefix.size();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, rounds);
    if (ec == std::errc() && ptr == last && rounds >= 1) return SyncPolicy::average_every(rounds);
  }
  throw ConfigError("sync policy must be 'none' or 'average_every:R' with R >= 1, got '" + text + "'");
}

std::string to_string(const SyncPolicy& policy) {
  if (policy.kind == SyncPolicy::Kind::none) return "none";
  return "average_every:" + std::to_string(policy.rounds);
}

void ExperimentConfig::validate() const {
  try {
    model.validate();
  } catch (const SpecError& e) {
    fail("model", e.what());
  }
  if (partition_weights.empty()) fail("data.partition_weights", "needs at least one client");
  for (double w : partition_weights) {
    if (!(w > 0.0) || !std::isfinite(w)) fail("data.partition_weights", "weights must be positive");
  }
  if (source == DataSource::csv && data_path.empty()) fail("data.path", "required for csv source");
  if (source == DataSource::synthetic) {
    if (synthetic.classes != 0 && synthetic.classes != model.class_count()) {
      fail("data.synthetic.classes", "must equal the last entry of model.dims");
    }
    if (synthetic.dim != 0 && synthetic.dim != model.input_width()) {
      fail("data.synthetic.dim", "must equal the first entry of model.dims");
    }
    if (synthetic.n < partition_weights.size()) {
      fail("data.synthetic.n", "fewer samples than clients");
    }
    if (!(synthetic.spread >= 0.0) || !std::isfinite(synthetic.spread)) {
      fail("data.synthetic.spread", "must be non-negative");
    }
  }
  if (epochs == 0) fail("training.epochs", "must be positive");
  if (global_batch < partition_weights.size()) {
    fail("training.global_batch", "must be at least the number of clients");
  }
  if (sync.kind == SyncPolicy::Kind::average_every && sync.rounds == 0) {
    fail("training.sync.rounds", "must be at least 1");
  }
  if (timeout.count() <= 0) fail("transport.timeout_ms", "must be positive");
  SocketAddress::parse(addr);
  if (output_dir.empty()) fail("output.directory", "must not be empty");
}

ExperimentConfig config_from_json(const json& root) {
  reject_unknown(root, "config", {"model", "data", "training", "transport", "output"});
  ExperimentConfig cfg;

  const json& model = section(root, "model");
  reject_unknown(model, "model", {"dims", "activation", "lr", "seed", "precision", "split_index"});
  if (!model.contains("dims")) fail("model.dims", "required");
  cfg.model.dims = read<std::vector<std::size_t>>(model, "model", "dims", {});
  const auto act = read<std::string>(model, "model", "activation", "relu");
  const auto parsed_act = parse_hidden_activation(act);
  if (!parsed_act) fail("model.activation", "expected relu, tanh or identity, got '" + act + "'");
  cfg.model.hidden_activation = *parsed_act;
  cfg.model.learning_rate = read<double>(model, "model", "lr", 0.1);
  cfg.model.seed = read<std::uint64_t>(model, "model", "seed", 0);
  const auto prec = read<std::string>(model, "model", "precision", "f64");
  const auto parsed_prec = parse_precision(prec);
  if (!parsed_prec) fail("model.precision", "expected f32 or f64, got '" + prec + "'");
  cfg.model.precision = *parsed_prec;
  cfg.model.split_index = read<std::size_t>(model, "model", "split_index", 1);

  const json& data = section(root, "data");
  reject_unknown(data, "data", {"source", "path", "partition_weights", "synthetic"});
  const auto source = read<std::string>(data, "data", "source", "synthetic");
  if (source == "synthetic") {
    cfg.source = DataSource::synthetic;
  } else if (source == "csv") {
    cfg.source = DataSource::csv;
  } else {
    fail("data.source", "expected synthetic or csv, got '" + source + "'");
  }
  cfg.data_path = read<std::string>(data, "data", "path", "");
  cfg.partition_weights = read<std::vector<double>>(data, "data", "partition_weights", {1.0});
  const json& synth = section(data, "synthetic");
  reject_unknown(synth, "data.synthetic", {"classes", "dim", "n", "spread"});
  cfg.synthetic.classes = read<std::size_t>(synth, "data.synthetic", "classes", 0);
  cfg.synthetic.dim = read<std::size_t>(synth, "data.synthetic", "dim", 0);
  cfg.synthetic.n = read<std::size_t>(synth, "data.synthetic", "n", 600);
  cfg.synthetic.spread = read<double>(synth, "data.synthetic", "spread", 0.5);

  const json& training = section(root, "training");
  reject_unknown(training, "training", {"epochs", "global_batch", "sync"});
  cfg.epochs = read<std::size_t>(training, "training", "epochs", 10);
  cfg.global_batch = read<std::size_t>(training, "training", "global_batch", 32);
  const json& sync = section(training, "sync");
  reject_unknown(sync, "training.sync", {"policy", "rounds"});
  const auto policy = read<std::string>(sync, "training.sync", "policy", "none");
  const auto rounds = read<std::size_t>(sync, "training.sync", "rounds", 1);
  if (policy == "none") {
    cfg.sync = SyncPolicy::none();
  } else if (policy == "average_every") {
    cfg.sync = SyncPolicy::average_every(rounds);
  } else {
    fail("training.sync.policy", "expected none or average_every, got '" + policy + "'");
  }

  const json& transport = section(root, "transport");
  reject_unknown(transport, "transport", {"kind", "addr", "timeout_ms"});
  const auto kind = read<std::string>(transport, "transport", "kind", "loopback");
  if (kind == "loopback") {
    cfg.transport = TransportKind::loopback;
  } else if (kind == "tcp") {
    cfg.transport = TransportKind::tcp;
  } else {
    fail("transport.kind", "expected loopback or tcp, got '" + kind + "'");
  }
  cfg.addr = read<std::string>(transport, "transport", "addr", "127.0.0.1:7470");
  cfg.timeout = std::chrono::milliseconds(
      read<long long>(transport, "transport", "timeout_ms", kDefaultTimeout.count()));

  const json& output = section(root, "output");
  reject_unknown(output, "output", {"directory"});
  cfg.output_dir = read<std::string>(output, "output", "directory", "out");

  cfg.validate();
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  return {
      {"model",
       {{"dims", cfg.model.dims},
        {"activation", to_string(cfg.model.hidden_activation)},
        {"lr", cfg.model.learning_rate},
        {"seed", cfg.model.seed},
        {"precision", to_string(cfg.model.precision)},
        {"split_index", cfg.model.split_index}}},
      {"data",
       {{"source", cfg.source == DataSource::csv ? "csv" : "synthetic"},
        {"path", cfg.data_path},
        {"partition_weights", cfg.partition_weights},
        {"synthetic",
         {{"classes", cfg.synthetic.classes},
          {"dim", cfg.synthetic.dim},
          {"n", cfg.synthetic.n},
          {"spread", cfg.synthetic.spread}}}}},
      {"training",
       {{"epochs", cfg.epochs},
        {"global_batch", cfg.global_batch},
        {"sync",
         {{"policy", cfg.sync.kind == SyncPolicy::Kind::none ? "none" : "average_every"},
          {"rounds", cfg.sync.rounds}}}}},
      {"transport",
       {{"kind", cfg.transport == TransportKind::tcp ? "tcp" : "loopback"},
        {"addr", cfg.addr},
        {"timeout_ms", cfg.timeout.count()}}},
      {"output", {{"directory", cfg.output_dir}}},
  };
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  out << config_to_json(cfg).dump(2) << '\n';
}

void apply_overrides(ExperimentConfig& cfg, const ConfigOverrides& flags) {
  if (const char* env = std::getenv("SPLITNN_SEED"); env && *env) {
    std::uint64_t seed = 0;
    const char* end = env + std::char_traits<char>::length(env);
    auto [ptr, ec] = std::from_chars(env, end, seed);
    if (ec != std::errc() || ptr != end) {
      throw ConfigError(std::string("SPLITNN_SEED: not an unsigned integer: '") + env + "'");
    }
    cfg.model.seed = seed;
  }
  if (flags.seed) cfg.model.seed = *flags.seed;
  if (flags.epochs) cfg.epochs = *flags.epochs;
  if (flags.global_batch) cfg.global_batch = *flags.global_batch;
  if (flags.lr) cfg.model.learning_rate = *flags.lr;
  if (flags.precision) {
    const auto p = parse_precision(*flags.precision);
    if (!p) throw ConfigError("--precision: expected f32 or f64");
    cfg.model.precision = *p;
  }
  if (flags.transport) {
    if (*flags.transport == "loopback") {
      cfg.transport = TransportKind::loopback;
    } else if (*flags.transport == "tcp") {
      cfg.transport = TransportKind::tcp;
    } else {
      throw ConfigError("--transport: expected loopback or tcp");
    }
  }
  if (flags.addr) cfg.addr = *flags.addr;
  if (flags.timeout_ms) cfg.timeout = std::chrono::milliseconds(*flags.timeout_ms);
  if (flags.output_dir) cfg.output_dir = *flags.output_dir;
  if (flags.sync) cfg.sync = parse_sync_policy(*flags.sync);
  cfg.validate();
}

}  // namespace splitnn
