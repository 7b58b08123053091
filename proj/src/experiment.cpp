#include "splitnn/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "splitnn/error.hpp"
#include "splitnn/rng.hpp"

namespace splitnn {

using nlohmann::json;
namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) noexcept {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const SpecError*>(&e) ||
      dynamic_cast<const IngestionError*>(&e) || dynamic_cast<const AllocationError*>(&e) ||
      dynamic_cast<const ValidationError*>(&e)) {
    return kExitConfig;
  }
  if (dynamic_cast<const TransportError*>(&e) || dynamic_cast<const ProtocolError*>(&e) ||
      dynamic_cast<const ProtocolStateError*>(&e)) {
    return kExitTransport;
  }
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  return kExitFailure;
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
  cfg.validate();
  PreparedData out;
  if (cfg.source == DataSource::synthetic) {
    out.full = gen_blobs(cfg.model.class_count(), cfg.model.input_width(), cfg.synthetic.n,
                         cfg.synthetic.spread, derive_seed(cfg.model.seed, seed_stream::data));
  } else {
    try {
      out.full = load_csv(cfg.data_path, cfg.model.class_count());
    } catch (const IngestionError& e) {
      throw ConfigError(std::string("data.path: ") + e.what());
    }
    if (out.full.dim() != cfg.model.input_width()) {
      throw ConfigError("data.path: dataset has " + std::to_string(out.full.dim()) +
                        " features but model.dims[0] is " +
                        std::to_string(cfg.model.input_width()));
    }
  }
  try {
    out.partition = partition_proportional(out.full, cfg.partition_weights,
                                           derive_seed(cfg.model.seed, seed_stream::partition));
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("data.partition_weights: ") + e.what());
  }
  for (const auto& part : out.partition.indices) out.client_data.push_back(subset(out.full, part));
  return out;
}

namespace {

std::string shortest(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(dir.string() + ": cannot create directory: " + ec.message());
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  out << j.dump(2) << '\n';
}

json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()},
          {"cols", m.cols()},
          {"values", std::vector<double>(m.values().begin(), m.values().end())}};
}

Matrix matrix_from_json(const json& j) {
  return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("values").get<std::vector<double>>());
}

Activation activation_from_string(const std::string& s) {
  if (s == "softmax_output") return Activation::softmax_output;
  if (auto a = parse_hidden_activation(s)) return *a;
  throw ConfigError("unknown activation '" + s + "' in checkpoint");
}

json traffic_json(const ByteCounts& c) {
  return {{"bytes_up", c.bytes_up},
          {"bytes_down", c.bytes_down},
          {"frames_up", c.frames_up},
          {"frames_down", c.frames_down},
          {"bytes_total", c.bytes_total()}};
}

json summary_json(const std::vector<RoundMetrics>& history, const ByteCounts& total,
                  std::size_t clients, double wall_seconds) {
  const auto epochs = summarize_epochs(history);
  json per_client = json::object();
  if (!history.empty()) {
    const std::size_t last_epoch = history.back().epoch;
    std::map<ClientId, std::pair<std::size_t, std::size_t>> tally;
    for (const auto& m : history) {
      if (m.epoch != last_epoch) continue;
      tally[m.client_id].first += m.correct;
      tally[m.client_id].second += m.batch_size;
    }
    for (const auto& [id, t] : tally) {
      per_client[std::to_string(id)] =
          t.second == 0 ? 0.0 : static_cast<double>(t.first) / static_cast<double>(t.second);
    }
  }
  json epoch_rows = json::array();
  for (const auto& e : epochs) {
    epoch_rows.push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"accuracy", e.accuracy}});
  }
  return {{"clients", clients},
          {"steps", history.size()},
          {"final_accuracy_per_client", per_client},
          {"final_epoch_accuracy", epochs.empty() ? 0.0 : epochs.back().accuracy},
          {"epochs", epoch_rows},
          {"traffic", traffic_json(total)},
          {"total_bytes", total.bytes_total()},
          {"wall_time_seconds", wall_seconds}};
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::string format_metrics_csv(const std::vector<RoundMetrics>& history) {
  std::ostringstream out;
  out << "epoch,round,client_id,loss,accuracy,bytes_up,bytes_down,cumulative_bytes\n";
  std::uint64_t cumulative = 0;
  for (const auto& m : history) {
    cumulative += m.traffic.bytes_total();
    out << m.epoch << ',' << m.round << ',' << m.client_id << ',' << shortest(m.loss) << ','
        << shortest(m.accuracy()) << ',' << m.traffic.bytes_up << ',' << m.traffic.bytes_down
        << ',' << cumulative << '\n';
  }
  return out.str();
}

void write_metrics_csv(const std::vector<RoundMetrics>& history, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  out << format_metrics_csv(history);
}

json layers_to_json(const Layers& layers) {
  json arr = json::array();
  for (const auto& l : layers) {
    arr.push_back({{"activation", to_string(l.activation)},
                   {"W", matrix_to_json(l.W)},
                   {"b", matrix_to_json(l.b)}});
  }
  return {{"layers", arr}};
}

Layers layers_from_json(const json& j) {
  Layers out;
  for (const auto& l : j.at("layers")) {
    out.push_back(DenseLayer{matrix_from_json(l.at("W")), matrix_from_json(l.at("b")),
                             activation_from_string(l.at("activation").get<std::string>())});
  }
  return out;
}

void write_checkpoint(const Layers& layers, const fs::path& path) {
  write_json(layers_to_json(layers), path);
}

Layers read_checkpoint(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(path.string() + ": cannot open checkpoint");
  return layers_from_json(json::parse(in));
}

TrainingResult cmd_train_split(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  PreparedData data = prepare_data(cfg);
  const fs::path out = cfg.output_dir;
  ensure_dir(out / "checkpoint");
  save_config(cfg, out / "config.json");

  TrainingSetup setup;
  setup.spec = cfg.model;
  setup.client_data = std::move(data.client_data);
  setup.global_batch = cfg.global_batch;
  setup.epochs = cfg.epochs;
  setup.sync = cfg.sync;
  setup.transport = cfg.transport;
  setup.timeout = cfg.timeout;
  TrainingResult result = run_training(setup);

  write_metrics_csv(result.history, out / "metrics.csv");
  json summary = summary_json(result.history, result.total_traffic, cfg.client_count(),
                              seconds_since(start));
  summary["mode"] = "split";
  summary["minibatch_sizes"] = result.minibatch_sizes;
  json per_client = json::array();
  for (const auto& t : result.client_traffic) per_client.push_back(traffic_json(t));
  summary["client_traffic"] = per_client;
  write_json(summary, out / "summary.json");
  for (std::size_t k = 0; k < result.client_layers.size(); ++k) {
    write_checkpoint(result.client_layers[k], out / "checkpoint" / ("client_" + std::to_string(k) + ".json"));
  }
  write_checkpoint(result.server_layers, out / "checkpoint" / "server.json");
  return result;
}

std::vector<RoundMetrics> cmd_train_central(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  PreparedData data = prepare_data(cfg);
  const fs::path out = cfg.output_dir;
  ensure_dir(out / "checkpoint");
  save_config(cfg, out / "config.json");

  Layers layers = init_model(cfg.model);
  const Dataset& pooled = data.full;
  BatchSampler sampler(pooled.size(), std::min(cfg.global_batch, pooled.size()),
                       client_sampler_seed(cfg.model.seed, 0));
  std::vector<RoundMetrics> history;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    sampler.begin_epoch(e);
    std::size_t round = 0;
    while (auto batch = sampler.next()) {
      const Dataset part = subset(pooled, *batch);
      const auto logits = forward_all(layers, part.X).back().A;
      auto step = centralized_train_step(layers, part.X, part.labels, cfg.model.learning_rate);
      RoundMetrics m;
      m.epoch = e;
      m.round = round++;
      m.batch_id = history.size();
      m.loss = step.loss;
      m.correct = count_correct(logits, part.labels);
      m.batch_size = part.size();
      history.push_back(m);
      layers = std::move(step.layers);
    }
  }

  write_metrics_csv(history, out / "metrics.csv");
  json summary = summary_json(history, ByteCounts{}, 1, seconds_since(start));
  summary["mode"] = "central";
  write_json(summary, out / "summary.json");
  write_checkpoint(layers, out / "checkpoint" / "central.json");
  return history;
}

ComparisonReport cmd_simulate_bytes(const ExperimentConfig& cfg, const SimulateOptions& opts) {
  cfg.validate();
  const std::uint64_t clients = opts.clients.value_or(cfg.client_count());
  const std::uint64_t batch =
      opts.batch_size.value_or(std::max<std::uint64_t>(1, cfg.global_batch / clients));
  ComparisonReport report = compare(cfg.model, batch, clients, opts.rounds, cfg.model.precision);
  const fs::path out = cfg.output_dir;
  ensure_dir(out);
  write_report_csv(report, out / "bytes_comparison.csv");
  write_json(report_summary(report), out / "bytes_summary.json");
  return report;
}

Dataset cmd_gen_data(const GenDataOptions& opts) {
  Dataset d = gen_blobs(opts.classes, opts.dim, opts.n, opts.spread, opts.seed);
  if (opts.out.has_parent_path()) ensure_dir(opts.out.parent_path());
  write_csv(d, opts.out);
  return d;
}

namespace {

void require_tcp_ready(const ExperimentConfig& cfg) {
  if (cfg.sync.kind != SyncPolicy::Kind::none) {
    throw ConfigError(
        "training.sync: averaging client layers needs in-process training (train-split); "
        "serve/join supports policy none only");
  }
}

}  // namespace

ServeResult cmd_serve(const ExperimentConfig& cfg, std::function<void(std::uint16_t)> on_listening) {
  cfg.validate();
  require_tcp_ready(cfg);
  const auto start = std::chrono::steady_clock::now();
  const std::size_t clients = cfg.client_count();
  TcpListener listener(SocketAddress::parse(cfg.addr));
  if (on_listening) on_listening(listener.port());

  std::vector<std::unique_ptr<Endpoint>> links(clients);
  std::vector<std::size_t> counts(clients, 0);
  for (std::size_t accepted = 0; accepted < clients; ++accepted) {
    auto ep = listener.accept(Role::server, cfg.model.precision, cfg.timeout);
    const Message first = ep->recv();
    const Hello* hello = std::get_if<Hello>(&first);
    if (!hello) throw ProtocolStateError("expected Hello as the first frame");
    if (hello->client_id >= clients || links[hello->client_id]) {
      throw ProtocolStateError("unexpected or duplicate client id " + std::to_string(hello->client_id));
    }
    if (hello->sample_count == 0) throw ProtocolStateError("client reported no samples");
    counts[hello->client_id] = hello->sample_count;
    links[hello->client_id] = std::move(ep);
  }

  ServeResult result;
  result.minibatch_sizes = allocate_minibatches(counts, cfg.global_batch);
  std::vector<std::size_t> batches(clients);
  std::size_t rounds = 0;
  for (std::size_t k = 0; k < clients; ++k) {
    batches[k] = counts[k] / result.minibatch_sizes[k];
    rounds = std::max(rounds, batches[k]);
  }
  std::vector<ClientId> order;
  for (std::size_t e = 0; e < cfg.epochs; ++e)
    for (std::size_t r = 0; r < rounds; ++r)
      for (std::size_t k = 0; k < clients; ++k)
        if (r < batches[k]) order.push_back(static_cast<ClientId>(k));

  const Layers init = init_model(cfg.model);
  ServerNode node(ServerState(
      Layers(init.begin() + static_cast<std::ptrdiff_t>(cfg.model.split_index), init.end()),
      cfg.model.learning_rate));
  for (std::size_t k = 0; k < clients; ++k) {
    links[k]->send(ConfigDown{static_cast<ClientId>(k),
                              static_cast<std::uint32_t>(result.minibatch_sizes[k]),
                              static_cast<std::uint32_t>(cfg.model.boundary_width()),
                              cfg.epochs});
  }

  TurnGate gate(order);
  std::vector<std::exception_ptr> errors(clients);
  std::vector<std::thread> threads;
  for (std::size_t k = 0; k < clients; ++k) {
    threads.emplace_back([&, k] {
      try {
        node.serve_link(*links[k], static_cast<ClientId>(k), &gate, cfg.epochs);
      } catch (...) {
        errors[k] = std::current_exception();
        for (auto& l : links) l->close();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }

  result.server_layers = node.layers();
  for (const auto& l : links) result.client_traffic.push_back(l->counts());

  const fs::path out = cfg.output_dir;
  ensure_dir(out / "checkpoint");
  write_checkpoint(result.server_layers, out / "checkpoint" / "server.json");
  json per_client = json::array();
  ByteCounts total;
  for (const auto& t : result.client_traffic) {
    per_client.push_back(traffic_json(t));
    total = total + t;
  }
  write_json({{"mode", "serve"},
              {"clients", clients},
              {"minibatch_sizes", result.minibatch_sizes},
              {"client_traffic", per_client},
              {"traffic", traffic_json(total)},
              {"total_bytes", total.bytes_total()},
              {"wall_time_seconds", seconds_since(start)}},
             out / "server_summary.json");
  return result;
}

JoinResult cmd_join(const ExperimentConfig& cfg, ClientId client) {
  cfg.validate();
  require_tcp_ready(cfg);
  const auto start = std::chrono::steady_clock::now();
  if (client >= cfg.client_count()) {
    throw ConfigError("client id " + std::to_string(client) + " outside the " +
                      std::to_string(cfg.client_count()) + " configured clients");
  }
  PreparedData data = prepare_data(cfg);
  Dataset local = std::move(data.client_data[client]);
  const std::size_t local_count = local.size();
  const Layers init = init_model(cfg.model);

  auto link = tcp_connect(SocketAddress::parse(cfg.addr), Role::client, cfg.model.precision,
                          cfg.timeout);
  link->send(Hello{client, local_count});
  const Message reply = link->recv();
  const ConfigDown* setup = std::get_if<ConfigDown>(&reply);
  if (!setup || setup->client_id != client) {
    throw ProtocolStateError("expected ConfigDown for client " + std::to_string(client));
  }
  if (setup->boundary_width != cfg.model.boundary_width() || setup->epochs != cfg.epochs) {
    throw ProtocolStateError("server model or schedule disagrees with local config");
  }

  ClientState state(client,
                    Layers(init.begin(), init.begin() + static_cast<std::ptrdiff_t>(cfg.model.split_index)),
                    std::move(local), setup->minibatch_size, cfg.model.learning_rate,
                    client_sampler_seed(cfg.model.seed, client));
  JoinResult result;
  BatchId next = 0;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    state.sampler.begin_epoch(e);
    for (std::size_t r = 0; r < state.sampler.batches_per_epoch(); ++r) {
      RoundMetrics m = run_client_exchange(state, *link, next++);
      m.epoch = e;
      m.round = r;
      result.history.push_back(m);
    }
    link->send(EpochEnd{client});
  }
  result.client_layers = state.layers;
  result.traffic = link->counts();

  const fs::path out = cfg.output_dir;
  ensure_dir(out / "checkpoint");
  write_metrics_csv(result.history, out / "metrics.csv");
  json summary = summary_json(result.history, result.traffic, 1, seconds_since(start));
  summary["mode"] = "join";
  summary["client_id"] = client;
  summary["minibatch_size"] = setup->minibatch_size;
  write_json(summary, out / "summary.json");
  write_checkpoint(result.client_layers,
                   out / "checkpoint" / ("client_" + std::to_string(client) + ".json"));
  return result;
}

}  // namespace splitnn
