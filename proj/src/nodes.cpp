#include "splitnn/nodes.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <string>

#include "splitnn/error.hpp"
#include "splitnn/rng.hpp"

namespace splitnn {

std::vector<std::size_t> allocate_minibatches(std::span<const std::size_t> counts,
                                              std::size_t global_batch) {
  if (counts.empty()) throw AllocationError("no clients to allocate minibatches to");
  if (global_batch < counts.size()) {
    throw AllocationError("global batch " + std::to_string(global_batch) + " is smaller than " +
                          std::to_string(counts.size()) + " clients");
  }
  using Wide = __int128;
  Wide total = 0;
  for (std::size_t n : counts) {
    if (n == 0) throw AllocationError("every client needs at least one sample");
    total += n;
  }

  // slack(k) = B*n_k - s_k*N, i.e. (quota - share) scaled by N.
  const std::size_t clients = counts.size();
  std::vector<std::size_t> shares(clients);
  std::vector<Wide> slack(clients);
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < clients; ++k) {
    const Wide scaled = static_cast<Wide>(global_batch) * counts[k];
    shares[k] = std::max<std::size_t>(1, static_cast<std::size_t>(scaled / total));
    slack[k] = scaled - static_cast<Wide>(shares[k]) * total;
    assigned += shares[k];
  }

  while (assigned < global_batch) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < clients; ++k) {
      if (slack[k] > slack[best]) best = k;
    }
    ++shares[best];
    slack[best] -= total;
    ++assigned;
  }
  // Only reachable when the floor-at-one rule over-assigned.
  while (assigned > global_batch) {
    std::size_t worst = clients;
    for (std::size_t k = 0; k < clients; ++k) {
      if (shares[k] > 1 && (worst == clients || slack[k] <= slack[worst])) worst = k;
    }
    --shares[worst];
    slack[worst] += total;
    --assigned;
  }
  return shares;
}

BatchSampler::BatchSampler(std::size_t samples, std::size_t batch_size, std::uint64_t seed)
    : order_(samples), batch_size_(batch_size), seed_(seed) {
  if (batch_size == 0) throw ValidationError("minibatch size must be positive");
  if (batch_size > samples) {
    throw ValidationError("minibatch size " + std::to_string(batch_size) + " exceeds " +
                          std::to_string(samples) + " local samples");
  }
  begin_epoch(0);
}

void BatchSampler::begin_epoch(std::size_t epoch) {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed_, epoch));
  std::shuffle(order_.begin(), order_.end(), rng);
  cursor_ = 0;
}

std::optional<std::span<const std::size_t>> BatchSampler::next() {
  if (cursor_ + batch_size_ > order_.size()) return std::nullopt;
  std::span<const std::size_t> batch(order_.data() + cursor_, batch_size_);
  cursor_ += batch_size_;
  return batch;
}

ClientState::ClientState(ClientId id_, Layers layers_, Dataset data_, std::size_t minibatch_size,
                         double learning_rate_, std::uint64_t sampler_seed)
    : id(id_),
      layers(std::move(layers_)),
      data(std::move(data_)),
      sampler(data.size(), minibatch_size, sampler_seed),
      learning_rate(learning_rate_) {
  if (layers.empty()) throw SpecError("client needs at least one layer");
  data.validate();
  if (data.dim() != layers.front().fan_in()) {
    throw DimensionError("client " + std::to_string(id) + " data width " +
                         std::to_string(data.dim()) + " does not match input layer " +
                         std::to_string(layers.front().fan_in()));
  }
}

ServerState::ServerState(Layers layers_, double learning_rate_)
    : layers(std::move(layers_)), learning_rate(learning_rate_) {
  if (layers.empty()) throw SpecError("server needs at least one layer");
}

std::optional<ActivationUp> client_forward(ClientState& client, BatchId batch_id) {
  if (client.pending.contains(batch_id)) {
    throw ProtocolStateError("client " + std::to_string(client.id) + " already has batch " +
                             std::to_string(batch_id) + " in flight");
  }
  const auto batch = client.sampler.next();
  if (!batch) return std::nullopt;

  PendingBatch pending;
  pending.labels.reserve(batch->size());
  for (std::size_t i : *batch) pending.labels.push_back(client.data.labels[i]);
  pending.caches = forward_all(client.layers, client.data.X.gather_rows(*batch));

  ActivationUp msg{client.id, batch_id, pending.caches.back().A};
  client.pending.emplace(batch_id, std::move(pending));
  return msg;
}

OutputDown server_forward(ServerState& server, const ActivationUp& msg) {
  const auto key = std::make_pair(msg.client_id, msg.batch_id);
  if (server.caches.contains(key)) {
    throw ProtocolStateError("duplicate ActivationUp for client " + std::to_string(msg.client_id) +
                             " batch " + std::to_string(msg.batch_id));
  }
  if (msg.activations.cols() != server.layers.front().fan_in()) {
    throw DimensionError("ActivationUp width " + std::to_string(msg.activations.cols()) +
                         " does not match server input " +
                         std::to_string(server.layers.front().fan_in()));
  }
  auto caches = forward_all(server.layers, msg.activations);
  OutputDown reply{msg.client_id, msg.batch_id, caches.back().A};
  server.caches.emplace(key, std::move(caches));
  return reply;
}

GradOutcome client_grad(ClientState& client, const OutputDown& msg) {
  auto it = client.pending.find(msg.batch_id);
  if (msg.client_id != client.id || it == client.pending.end() || it->second.graded) {
    throw ProtocolStateError("client " + std::to_string(client.id) +
                             " has no batch awaiting output " + std::to_string(msg.batch_id));
  }
  PendingBatch& pending = it->second;
  auto loss = softmax_xent(msg.logits, pending.labels);
  pending.correct = count_correct(msg.logits, pending.labels);
  pending.graded = true;
  return GradOutcome{loss.loss, pending.correct, pending.labels.size(),
                     GradientUp{client.id, msg.batch_id, std::move(loss.dlogits)}};
}

BoundaryGradDown server_backward(ServerState& server, const GradientUp& msg) {
  auto it = server.caches.find({msg.client_id, msg.batch_id});
  if (it == server.caches.end()) {
    throw ProtocolStateError("server has no forward state for client " +
                             std::to_string(msg.client_id) + " batch " +
                             std::to_string(msg.batch_id));
  }
  const auto caches = std::move(it->second);
  server.caches.erase(it);

  std::vector<LayerGrads> grads(server.layers.size());
  Matrix upstream = msg.logit_grads;
  for (std::size_t i = server.layers.size(); i-- > 0;) {
    grads[i] = dense_backward(server.layers[i], caches[i], upstream);
    upstream = grads[i].dX;
  }
  for (std::size_t i = 0; i < server.layers.size(); ++i) {
    server.layers[i] = sgd_step(server.layers[i], grads[i].dW, grads[i].db, server.learning_rate);
  }
  return BoundaryGradDown{msg.client_id, msg.batch_id, std::move(upstream)};
}

void client_backward(ClientState& client, const BoundaryGradDown& msg) {
  auto it = client.pending.find(msg.batch_id);
  if (msg.client_id != client.id || it == client.pending.end() || !it->second.graded) {
    throw ProtocolStateError("client " + std::to_string(client.id) +
                             " has no batch awaiting boundary gradient " +
                             std::to_string(msg.batch_id));
  }
  const PendingBatch pending = std::move(it->second);
  client.pending.erase(it);

  std::vector<LayerGrads> grads(client.layers.size());
  Matrix upstream = msg.boundary_grads;
  for (std::size_t i = client.layers.size(); i-- > 0;) {
    grads[i] = dense_backward(client.layers[i], pending.caches[i], upstream);
    upstream = grads[i].dX;
  }
  for (std::size_t i = 0; i < client.layers.size(); ++i) {
    client.layers[i] = sgd_step(client.layers[i], grads[i].dW, grads[i].db, client.learning_rate);
  }
}

void SyncPolicy::validate() const {
  if (kind == Kind::average_every && rounds < 1) {
    throw ValidationError("average_every needs at least one round between averages");
  }
}

void average_client_layers(std::span<ClientState> clients) {
  if (clients.size() < 2) return;
  const Layers& first = clients.front().layers;
  for (const auto& c : clients) {
    if (c.layers.size() != first.size()) throw DimensionError("client layer counts differ");
    for (std::size_t i = 0; i < first.size(); ++i) {
      require_same_shape(c.layers[i].W, first[i].W, "average_client_layers");
      require_same_shape(c.layers[i].b, first[i].b, "average_client_layers");
    }
  }

  // mean = x0 + sum(x_k - x0)/K, exact when every client holds the same value.
  const double count = static_cast<double>(clients.size());
  auto mean_into = [&](auto member, std::size_t layer) {
    Matrix base = first[layer].*member;
    Matrix mean = base;
    for (std::size_t v = 0; v < base.size(); ++v) {
      double offset = 0.0;
      for (const auto& c : clients) offset += (c.layers[layer].*member).data()[v] - base.data()[v];
      mean.data()[v] = base.data()[v] + offset / count;
    }
    return mean;
  };
  for (std::size_t i = 0; i < first.size(); ++i) {
    Matrix W = mean_into(&DenseLayer::W, i);
    Matrix b = mean_into(&DenseLayer::b, i);
    for (auto& c : clients) {
      c.layers[i].W = W;
      c.layers[i].b = b;
    }
  }
}

bool sync_l1(const SyncPolicy& policy, std::span<ClientState> clients,
             std::size_t completed_rounds) {
  policy.validate();
  if (policy.kind == SyncPolicy::Kind::none) return false;
  if (completed_rounds == 0 || completed_rounds % policy.rounds != 0) return false;
  average_client_layers(clients);
  return true;
}

}  // namespace splitnn
