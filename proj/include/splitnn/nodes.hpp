#pragma once

// Client (platform) and server state machines of one split-training round:
//
//   client_forward    client layers on a local minibatch   -> ActivationUp
//   server_forward    remaining layers                     -> OutputDown
//   client_grad       loss against local labels            -> GradientUp
//   server_backward   backprop + SGD on server layers      -> BoundaryGradDown
//   client_backward   backprop + SGD on client layers
//
// Raw inputs and labels stay inside ClientState; only the matrices named in
// the messages cross the boundary.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "splitnn/data.hpp"
#include "splitnn/nn.hpp"
#include "splitnn/protocol.hpp"

namespace splitnn {

/// Minibatch sizes proportional to local sample counts: floors (at least 1),
/// then largest remainders, ties to the lower client id. Sums to
/// global_batch. Throws AllocationError if global_batch < clients.
std::vector<std::size_t> allocate_minibatches(std::span<const std::size_t> counts,
                                              std::size_t global_batch);

/// Sampling without replacement within an epoch. Only full batches are
/// produced; the tail of a shuffled epoch that cannot fill one is skipped.
class BatchSampler {
 public:
  BatchSampler(std::size_t samples, std::size_t batch_size, std::uint64_t seed);

  void begin_epoch(std::size_t epoch);
  /// nullopt once the epoch cannot fill another batch.
  std::optional<std::span<const std::size_t>> next();

  std::size_t batch_size() const noexcept { return batch_size_; }
  std::size_t batches_per_epoch() const noexcept { return order_.size() / batch_size_; }
  std::size_t cursor() const noexcept { return cursor_; }
  void rewind(std::size_t cursor) noexcept { cursor_ = cursor; }

 private:
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::size_t cursor_ = 0;
};

struct PendingBatch {
  std::vector<ForwardCache> caches;  // one per client layer
  std::vector<std::uint32_t> labels;
  std::size_t correct = 0;
  bool graded = false;
};

struct ClientState {
  ClientState(ClientId id, Layers layers, Dataset data, std::size_t minibatch_size,
              double learning_rate, std::uint64_t sampler_seed);

  ClientId id;
  Layers layers;  // layers 1..split_index
  Dataset data;   // never serialized
  BatchSampler sampler;
  double learning_rate;
  std::map<BatchId, PendingBatch> pending;

  std::size_t minibatch_size() const noexcept { return sampler.batch_size(); }
};

struct ServerState {
  explicit ServerState(Layers layers, double learning_rate);

  Layers layers;  // layers split_index+1..k, shared by every client
  double learning_rate;
  std::map<std::pair<ClientId, BatchId>, std::vector<ForwardCache>> caches;
};

struct GradOutcome {
  double loss = 0.0;
  std::size_t correct = 0;
  std::size_t batch_size = 0;
  GradientUp message;
};

/// nullopt signals the end of the client's epoch.
std::optional<ActivationUp> client_forward(ClientState& client, BatchId batch_id);
OutputDown server_forward(ServerState& server, const ActivationUp& msg);
GradOutcome client_grad(ClientState& client, const OutputDown& msg);
BoundaryGradDown server_backward(ServerState& server, const GradientUp& msg);
void client_backward(ClientState& client, const BoundaryGradDown& msg);

struct SyncPolicy {
  enum class Kind { none, average_every };
  Kind kind = Kind::none;
  std::size_t rounds = 1;  // R for average_every

  static SyncPolicy none() { return {}; }
  static SyncPolicy average_every(std::size_t r) { return {Kind::average_every, r}; }
  void validate() const;
  friend bool operator==(const SyncPolicy&, const SyncPolicy&) = default;
};

/// Replaces every client's layers by the elementwise mean across clients.
void average_client_layers(std::span<ClientState> clients);

/// Applies the policy after `completed_rounds` rounds; returns true if it
/// averaged.
bool sync_l1(const SyncPolicy& policy, std::span<ClientState> clients,
             std::size_t completed_rounds);

}  // namespace splitnn
