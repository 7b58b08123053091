#pragma once

// Runs split training over real transports.
//
// Every client has its own link (client endpoint + server endpoint). The
// server side of each link is served by its own thread, and all of them share
// one ServerNode. Rounds are strictly sequential: clients are visited in
// ascending id order, and each finishes its four-message exchange before the
// next one starts.

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "splitnn/data.hpp"
#include "splitnn/nn.hpp"
#include "splitnn/nodes.hpp"
#include "splitnn/transport.hpp"

namespace splitnn {

struct RoundMetrics {
  std::size_t epoch = 0;
  std::size_t round = 0;
  ClientId client_id = 0;
  BatchId batch_id = 0;
  double loss = 0.0;
  std::size_t correct = 0;
  std::size_t batch_size = 0;
  ByteCounts traffic;  // this exchange, measured at the client endpoint

  double accuracy() const noexcept {
    return batch_size == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(batch_size);
  }
};

/// Client side of one four-message exchange over `link`. Fills everything
/// but epoch and round.
RoundMetrics run_client_exchange(ClientState& client, Endpoint& link, BatchId batch);

struct Link {
  std::unique_ptr<Endpoint> client;
  std::unique_ptr<Endpoint> server;
};

using LinkFactory = std::function<Link(ClientId)>;

LinkFactory loopback_links(Precision precision,
                           std::chrono::milliseconds timeout = kDefaultTimeout);
LinkFactory tcp_links(Precision precision, std::chrono::milliseconds timeout = kDefaultTimeout);

/// Serializes clients across link threads in a fixed order of turns.
class TurnGate {
 public:
  explicit TurnGate(std::vector<ClientId> order);

  /// Blocks until it is `client`'s turn. Returns false when the client has
  /// no turns left; throws TransportError once aborted.
  bool acquire(ClientId client);
  void release();
  void abort();

 private:
  std::mutex mutex_;
  std::condition_variable turn_changed_;
  std::vector<ClientId> order_;
  std::vector<std::size_t> remaining_;
  std::size_t position_ = 0;
  bool aborted_ = false;
};

/// Shared server weights plus the lock that serializes message handling.
class ServerNode {
 public:
  explicit ServerNode(ServerState state) : state_(std::move(state)) {}

  OutputDown handle(const ActivationUp& msg);
  BoundaryGradDown handle(const GradientUp& msg);

  /// Serves one link: ActivationUp -> OutputDown, GradientUp ->
  /// BoundaryGradDown. With a gate, each exchange waits for the client's
  /// turn and the loop ends when the client's turns and `epochs` EpochEnd
  /// frames are used up; without one it runs until the link closes.
  void serve_link(Endpoint& link, ClientId client, TurnGate* gate = nullptr,
                  std::size_t epochs = 0);

  ServerState snapshot() const;
  void restore(ServerState state);
  Layers layers() const;
  std::size_t pending_caches() const;

 private:
  mutable std::mutex mutex_;
  ServerState state_;
};

class SplitSession {
 public:
  using StepObserver = std::function<void(const RoundMetrics&, const SplitSession&)>;

  /// `client_data[k]` is client k's local dataset; minibatch sizes come from
  /// allocate_minibatches over their sizes.
  SplitSession(const ModelSpec& spec, std::vector<Dataset> client_data, std::size_t global_batch,
               SyncPolicy sync, LinkFactory links);
  ~SplitSession();

  SplitSession(const SplitSession&) = delete;
  SplitSession& operator=(const SplitSession&) = delete;

  void set_step_observer(StepObserver observer) { observer_ = std::move(observer); }

  std::size_t rounds_per_epoch() const noexcept { return rounds_per_epoch_; }
  const std::vector<std::size_t>& minibatch_sizes() const noexcept { return minibatch_sizes_; }

  void begin_epoch(std::size_t epoch);

  /// One round of the current epoch. On a transport failure every client and
  /// the server are restored to their state at round start, the links are
  /// torn down, and the TransportError is rethrown; call reconnect() to go on.
  std::vector<RoundMetrics> run_round();

  /// Fresh links and server threads after a failed round.
  void reconnect();

  const std::vector<ClientState>& clients() const noexcept { return clients_; }
  Layers server_layers() const { return server_.layers(); }
  std::size_t server_pending_caches() const { return server_.pending_caches(); }
  std::size_t client_pending_caches() const;
  /// Traffic of client k's link at the client endpoint, all exchanges so far.
  ByteCounts link_counts(ClientId client) const;
  ByteCounts total_counts() const;
  std::size_t completed_rounds() const noexcept { return completed_rounds_; }

  /// Full network as seen by client k: its client layers + the server layers.
  Layers model_for(ClientId client) const;

 private:
  RoundMetrics exchange(ClientState& client, Endpoint& link);
  void start_links();
  void stop_links() noexcept;

  ModelSpec spec_;
  std::vector<ClientState> clients_;
  std::vector<std::size_t> minibatch_sizes_;
  ServerNode server_;
  SyncPolicy sync_;
  LinkFactory make_link_;
  std::vector<Link> links_;
  std::vector<ByteCounts> retired_counts_;
  std::vector<std::thread> server_threads_;
  std::vector<std::exception_ptr> server_errors_;
  std::vector<BatchId> next_batch_;
  StepObserver observer_;
  std::size_t rounds_per_epoch_ = 0;
  std::size_t epoch_ = 0;
  std::size_t round_in_epoch_ = 0;
  std::size_t completed_rounds_ = 0;
};

enum class TransportKind { loopback, tcp };

struct TrainingSetup {
  ModelSpec spec;
  std::vector<Dataset> client_data;
  std::size_t global_batch = 1;
  std::size_t epochs = 1;
  SyncPolicy sync;
  TransportKind transport = TransportKind::loopback;
  std::chrono::milliseconds timeout = kDefaultTimeout;
  SplitSession::StepObserver observer;
};

struct EpochSummary {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double accuracy = 0.0;  // correct / seen over every batch of the epoch
};

struct TrainingResult {
  std::vector<RoundMetrics> history;
  std::vector<EpochSummary> epochs;
  std::vector<Layers> client_layers;
  Layers server_layers;
  std::vector<std::size_t> minibatch_sizes;
  std::vector<ByteCounts> client_traffic;
  ByteCounts total_traffic;
};

std::vector<EpochSummary> summarize_epochs(const std::vector<RoundMetrics>& history);

/// Epochs x rounds of split training; deterministic given spec.seed.
TrainingResult run_training(const TrainingSetup& setup);

}  // namespace splitnn
