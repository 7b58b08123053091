#include "splitnn/session.hpp"

#include <algorithm>
#include <map>
#include <tuple>
#include <string>

#include "splitnn/error.hpp"
#include "splitnn/rng.hpp"

namespace splitnn {

LinkFactory loopback_links(Precision precision, std::chrono::milliseconds timeout) {
  return [precision, timeout](ClientId) {
    auto [client, server] = loopback_pair(precision, timeout);
    return Link{std::move(client), std::move(server)};
  };
}

LinkFactory tcp_links(Precision precision, std::chrono::milliseconds timeout) {
  return [precision, timeout](ClientId) {
    auto [client, server] = tcp_loopback_pair(precision, timeout);
    return Link{std::move(client), std::move(server)};
  };
}

TurnGate::TurnGate(std::vector<ClientId> order) : order_(std::move(order)) {
  for (ClientId c : order_) {
    if (c >= remaining_.size()) remaining_.resize(c + 1, 0);
    ++remaining_[c];
  }
}

bool TurnGate::acquire(ClientId client) {
  std::unique_lock lock(mutex_);
  if (client >= remaining_.size() || remaining_[client] == 0) return false;
  turn_changed_.wait(lock, [&] { return aborted_ || order_[position_] == client; });
  if (aborted_) throw TransportError("turn schedule aborted");
  return true;
}

void TurnGate::release() {
  {
    std::lock_guard lock(mutex_);
    if (position_ < order_.size()) {
      --remaining_[order_[position_]];
      ++position_;
    }
  }
  turn_changed_.notify_all();
}

void TurnGate::abort() {
  {
    std::lock_guard lock(mutex_);
    aborted_ = true;
  }
  turn_changed_.notify_all();
}

OutputDown ServerNode::handle(const ActivationUp& msg) {
  std::lock_guard lock(mutex_);
  return server_forward(state_, msg);
}

BoundaryGradDown ServerNode::handle(const GradientUp& msg) {
  std::lock_guard lock(mutex_);
  return server_backward(state_, msg);
}

namespace {

template <class T>
T expect(Message msg, ClientId client) {
  T* typed = std::get_if<T>(&msg);
  if (!typed) {
    throw ProtocolStateError("unexpected " + std::string(to_string(message_type(msg))) +
                             " on link of client " + std::to_string(client));
  }
  if (typed->client_id != client) {
    throw ProtocolStateError("message for client " + std::to_string(typed->client_id) +
                             " arrived on link of client " + std::to_string(client));
  }
  return std::move(*typed);
}

}  // namespace

void ServerNode::serve_link(Endpoint& link, ClientId client, TurnGate* gate, std::size_t epochs) {
  auto exchange = [&](Message first) {
    const auto up = expect<ActivationUp>(std::move(first), client);
    link.send(handle(up));
    const auto grad = expect<GradientUp>(link.recv(), client);
    if (grad.batch_id != up.batch_id) {
      throw ProtocolStateError("GradientUp for batch " + std::to_string(grad.batch_id) +
                               " while batch " + std::to_string(up.batch_id) + " is open");
    }
    link.send(handle(grad));
  };

  if (!gate) {
    for (;;) exchange(link.recv(std::nullopt));
  }

  std::size_t ended = 0;
  try {
    while (gate->acquire(client)) {
      Message first = link.recv(std::nullopt);
      while (std::holds_alternative<EpochEnd>(first)) {
        expect<EpochEnd>(std::move(first), client);
        ++ended;
        first = link.recv(std::nullopt);
      }
      exchange(std::move(first));
      gate->release();
    }
    while (ended < epochs) {
      expect<EpochEnd>(link.recv(), client);
      ++ended;
    }
  } catch (...) {
    gate->abort();
    throw;
  }
}

ServerState ServerNode::snapshot() const {
  std::lock_guard lock(mutex_);
  return state_;
}

void ServerNode::restore(ServerState state) {
  std::lock_guard lock(mutex_);
  state_ = std::move(state);
}

Layers ServerNode::layers() const {
  std::lock_guard lock(mutex_);
  return state_.layers;
}

std::size_t ServerNode::pending_caches() const {
  std::lock_guard lock(mutex_);
  return state_.caches.size();
}

namespace {

std::vector<ClientState> make_clients(const ModelSpec& spec, std::vector<Dataset>& data,
                                      const std::vector<std::size_t>& sizes, const Layers& init) {
  const Layers client_layers(init.begin(), init.begin() + static_cast<std::ptrdiff_t>(spec.split_index));
  std::vector<ClientState> clients;
  clients.reserve(data.size());
  for (std::size_t k = 0; k < data.size(); ++k) {
    if (data[k].class_count > spec.class_count()) {
      throw DimensionError("client " + std::to_string(k) + " has more classes than the output layer");
    }
    clients.emplace_back(static_cast<ClientId>(k), client_layers, std::move(data[k]), sizes[k],
                         spec.learning_rate, client_sampler_seed(spec.seed, k));
  }
  return clients;
}

std::vector<std::size_t> local_counts(const std::vector<Dataset>& data) {
  std::vector<std::size_t> counts;
  for (const auto& d : data) counts.push_back(d.size());
  return counts;
}

ServerState make_server(const ModelSpec& spec, const Layers& init) {
  return ServerState(Layers(init.begin() + static_cast<std::ptrdiff_t>(spec.split_index), init.end()),
                     spec.learning_rate);
}

}  // namespace

SplitSession::SplitSession(const ModelSpec& spec, std::vector<Dataset> client_data,
                           std::size_t global_batch, SyncPolicy sync, LinkFactory links)
    : spec_(spec),
      minibatch_sizes_(allocate_minibatches(local_counts(client_data), global_batch)),
      server_(make_server(spec, init_model(spec))),
      sync_(sync),
      make_link_(std::move(links)) {
  sync_.validate();
  clients_ = make_clients(spec_, client_data, minibatch_sizes_, init_model(spec_));
  for (const auto& c : clients_) {
    rounds_per_epoch_ = std::max(rounds_per_epoch_, c.sampler.batches_per_epoch());
  }
  retired_counts_.resize(clients_.size());
  next_batch_.assign(clients_.size(), 0);
  start_links();
}

SplitSession::~SplitSession() { stop_links(); }

void SplitSession::start_links() {
  links_.clear();
  server_errors_.assign(clients_.size(), nullptr);
  for (std::size_t k = 0; k < clients_.size(); ++k) {
    links_.push_back(make_link_(static_cast<ClientId>(k)));
  }
  for (std::size_t k = 0; k < clients_.size(); ++k) {
    server_threads_.emplace_back([this, k] {
      try {
        server_.serve_link(*links_[k].server, static_cast<ClientId>(k));
      } catch (...) {
        server_errors_[k] = std::current_exception();
        links_[k].server->close();
      }
    });
  }
}

void SplitSession::stop_links() noexcept {
  for (auto& link : links_) {
    link.client->close();
    link.server->close();
  }
  for (auto& t : server_threads_) t.join();
  server_threads_.clear();
  for (std::size_t k = 0; k < links_.size(); ++k) {
    retired_counts_[k] = retired_counts_[k] + links_[k].client->counts();
  }
  links_.clear();
}

void SplitSession::reconnect() {
  stop_links();
  start_links();
}

void SplitSession::begin_epoch(std::size_t epoch) {
  for (auto& c : clients_) c.sampler.begin_epoch(epoch);
  epoch_ = epoch;
  round_in_epoch_ = 0;
}

RoundMetrics run_client_exchange(ClientState& client, Endpoint& link, BatchId batch) {
  const ByteCounts before = link.counts();
  auto up = client_forward(client, batch);
  if (!up) throw ProtocolStateError("client " + std::to_string(client.id) + " ran out of batches");
  link.send(*up);
  const auto out = expect<OutputDown>(link.recv(), client.id);
  auto graded = client_grad(client, out);
  link.send(graded.message);
  const auto down = expect<BoundaryGradDown>(link.recv(), client.id);
  client_backward(client, down);

  RoundMetrics m;
  m.client_id = client.id;
  m.batch_id = batch;
  m.loss = graded.loss;
  m.correct = graded.correct;
  m.batch_size = graded.batch_size;
  m.traffic = link.counts() - before;
  return m;
}

RoundMetrics SplitSession::exchange(ClientState& client, Endpoint& link) {
  RoundMetrics m = run_client_exchange(client, link, next_batch_[client.id]++);
  m.epoch = epoch_;
  m.round = round_in_epoch_;
  return m;
}

std::vector<RoundMetrics> SplitSession::run_round() {
  if (links_.empty()) throw TransportError("session is disconnected; reconnect() first");
  if (round_in_epoch_ >= rounds_per_epoch_) return {};

  struct ClientMark {
    Layers layers;
    std::size_t cursor;
  };
  std::vector<ClientMark> marks;
  marks.reserve(clients_.size());
  for (const auto& c : clients_) marks.push_back({c.layers, c.sampler.cursor()});
  ServerState server_mark = server_.snapshot();
  const std::vector<BatchId> batch_mark = next_batch_;

  std::vector<RoundMetrics> out;
  try {
    for (std::size_t k = 0; k < clients_.size(); ++k) {
      ClientState& client = clients_[k];
      if (round_in_epoch_ >= client.sampler.batches_per_epoch()) continue;
      out.push_back(exchange(client, *links_[k].client));
      if (observer_) observer_(out.back(), *this);
    }
  } catch (const Error&) {
    stop_links();
    for (std::size_t k = 0; k < clients_.size(); ++k) {
      clients_[k].layers = std::move(marks[k].layers);
      clients_[k].sampler.rewind(marks[k].cursor);
      clients_[k].pending.clear();
    }
    server_.restore(std::move(server_mark));
    next_batch_ = batch_mark;
    for (auto& err : server_errors_) {
      if (!err) continue;
      try {
        std::rethrow_exception(err);
      } catch (const TransportError&) {
        // the client side already saw this one
      } catch (const Error&) {
        throw;
      }
    }
    throw;
  }

  ++round_in_epoch_;
  ++completed_rounds_;
  sync_l1(sync_, clients_, completed_rounds_);
  return out;
}

std::size_t SplitSession::client_pending_caches() const {
  std::size_t total = 0;
  for (const auto& c : clients_) total += c.pending.size();
  return total;
}

ByteCounts SplitSession::link_counts(ClientId client) const {
  ByteCounts counts = retired_counts_.at(client);
  if (client < links_.size()) counts = counts + links_[client].client->counts();
  return counts;
}

ByteCounts SplitSession::total_counts() const {
  ByteCounts total;
  for (std::size_t k = 0; k < clients_.size(); ++k) total = total + link_counts(static_cast<ClientId>(k));
  return total;
}

Layers SplitSession::model_for(ClientId client) const {
  Layers model = clients_.at(client).layers;
  for (auto& layer : server_.layers()) model.push_back(std::move(layer));
  return model;
}

std::vector<EpochSummary> summarize_epochs(const std::vector<RoundMetrics>& history) {
  std::map<std::size_t, std::tuple<double, std::size_t, std::size_t, std::size_t>> acc;
  for (const auto& m : history) {
    auto& [loss, steps, correct, seen] = acc[m.epoch];
    loss += m.loss;
    ++steps;
    correct += m.correct;
    seen += m.batch_size;
  }
  std::vector<EpochSummary> out;
  for (const auto& [epoch, v] : acc) {
    const auto& [loss, steps, correct, seen] = v;
    out.push_back({epoch, loss / static_cast<double>(steps),
                   seen == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(seen)});
  }
  return out;
}

TrainingResult run_training(const TrainingSetup& setup) {
  setup.spec.validate();
  if (setup.epochs == 0) throw ValidationError("epochs must be positive");
  LinkFactory links = setup.transport == TransportKind::tcp
                          ? tcp_links(setup.spec.precision, setup.timeout)
                          : loopback_links(setup.spec.precision, setup.timeout);
  SplitSession session(setup.spec, setup.client_data, setup.global_batch, setup.sync,
                       std::move(links));
  if (setup.observer) session.set_step_observer(setup.observer);

  TrainingResult result;
  for (std::size_t e = 0; e < setup.epochs; ++e) {
    session.begin_epoch(e);
    for (std::size_t r = 0; r < session.rounds_per_epoch(); ++r) {
      auto round = session.run_round();
      result.history.insert(result.history.end(), round.begin(), round.end());
    }
  }

  result.epochs = summarize_epochs(result.history);
  for (const auto& c : session.clients()) {
    result.client_layers.push_back(c.layers);
    result.client_traffic.push_back(session.link_counts(c.id));
  }
  result.server_layers = session.server_layers();
  result.minibatch_sizes = session.minibatch_sizes();
  result.total_traffic = session.total_counts();
  return result;
}

}  // namespace splitnn
