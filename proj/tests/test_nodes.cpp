#include <gtest/gtest.h>

#include <numeric>
#include <random>
#include <set>

#include "oracles.hpp"
#include "splitnn/data.hpp"
#include "splitnn/error.hpp"
#include "splitnn/nodes.hpp"

using namespace splitnn;

namespace {

ModelSpec small_spec() {
  ModelSpec s;
  s.dims = {2, 4, 3};
  s.seed = 5;
  s.learning_rate = 0.1;
  return s;
}

Layers client_part(const ModelSpec& s) {
  auto all = init_model(s);
  return Layers(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(s.split_index));
}

Layers server_part(const ModelSpec& s) {
  auto all = init_model(s);
  return Layers(all.begin() + static_cast<std::ptrdiff_t>(s.split_index), all.end());
}

ClientState make_client(ClientId id, std::size_t n, std::size_t batch, std::uint64_t data_seed = 1) {
  const auto spec = small_spec();
  return ClientState(id, client_part(spec), gen_blobs(3, 2, n, 0.5, data_seed), batch,
                     spec.learning_rate, 100 + id);
}

}  // namespace

TEST(AllocateMinibatches, Examples) {
  std::vector<std::size_t> a{100, 100}, b{100, 300}, c{1, 1, 1000};
  EXPECT_EQ(allocate_minibatches(a, 40), (std::vector<std::size_t>{20, 20}));
  EXPECT_EQ(allocate_minibatches(b, 40), (std::vector<std::size_t>{10, 30}));
  EXPECT_EQ(allocate_minibatches(c, 10), (std::vector<std::size_t>{1, 1, 8}));
}

TEST(AllocateMinibatches, Errors) {
  std::vector<std::size_t> three{5, 5, 5}, with_zero{5, 0};
  EXPECT_THROW(allocate_minibatches(three, 2), AllocationError);
  EXPECT_THROW(allocate_minibatches(with_zero, 4), AllocationError);
  EXPECT_THROW(allocate_minibatches(std::vector<std::size_t>{}, 4), AllocationError);
}

TEST(AllocateMinibatches, TiesGoToLowerClientId) {
  std::vector<std::size_t> even{7, 7, 7};
  EXPECT_EQ(allocate_minibatches(even, 10), (std::vector<std::size_t>{4, 3, 3}));
}

TEST(AllocateMinibatches, PropertyOnFeasibleVectors) {
  std::mt19937_64 rng(31);
  int checked = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t k = 1 + rng() % 8;
    std::vector<std::size_t> n(k);
    for (auto& x : n) x = 1 + rng() % 500;
    const std::size_t N = std::accumulate(n.begin(), n.end(), std::size_t{0});
    const std::size_t B = k + rng() % 200;
    const auto s = allocate_minibatches(n, B);
    EXPECT_EQ(std::accumulate(s.begin(), s.end(), std::size_t{0}), B);
    for (auto x : s) EXPECT_GE(x, 1u);
    if (!oracle::allocation_feasible(n, B)) continue;
    ++checked;
    for (std::size_t i = 0; i < k; ++i) EXPECT_TRUE(oracle::within_one(s[i], n[i], B, N));
  }
  EXPECT_GT(checked, 1500);
}

TEST(BatchSampler, CoversEpochWithoutReplacementAndDropsTail) {
  BatchSampler s(10, 3, 42);
  EXPECT_EQ(s.batches_per_epoch(), 3u);
  s.begin_epoch(0);
  std::set<std::size_t> seen;
  int batches = 0;
  while (auto b = s.next()) {
    EXPECT_EQ(b->size(), 3u);
    for (auto i : *b) EXPECT_TRUE(seen.insert(i).second);
    ++batches;
  }
  EXPECT_EQ(batches, 3);
  EXPECT_EQ(seen.size(), 9u);
}

TEST(BatchSampler, EpochsReshuffleDeterministically) {
  BatchSampler a(50, 5, 1), b(50, 5, 1);
  a.begin_epoch(0);
  b.begin_epoch(0);
  const std::vector<std::size_t> a0(a.next()->begin(), a.next()->end());
  const std::vector<std::size_t> b0(b.next()->begin(), b.next()->end());
  EXPECT_EQ(a0, b0);
  a.begin_epoch(1);
  const auto first = a.next();
  EXPECT_NE(std::vector<std::size_t>(first->begin(), first->end()), a0);
  EXPECT_THROW(BatchSampler(5, 6, 1), ValidationError);
  EXPECT_THROW(BatchSampler(5, 0, 1), ValidationError);
}

TEST(Nodes, FourOperationsRoundTrip) {
  const auto spec = small_spec();
  auto client = make_client(0, 30, 6);
  ServerState server(server_part(spec), spec.learning_rate);
  client.sampler.begin_epoch(0);
  const Layers before = client.layers;
  const Layers server_before = server.layers;

  auto up = client_forward(client, 0);
  ASSERT_TRUE(up);
  EXPECT_EQ(up->activations.rows(), 6u);
  EXPECT_EQ(up->activations.cols(), 4u);
  EXPECT_EQ(client.pending.size(), 1u);

  auto down = server_forward(server, *up);
  EXPECT_EQ(down.logits.cols(), 3u);
  EXPECT_EQ(server.caches.size(), 1u);

  auto grad = client_grad(client, down);
  EXPECT_EQ(grad.batch_size, 6u);
  EXPECT_GT(grad.loss, 0.0);
  EXPECT_EQ(grad.message.logit_grads.rows(), 6u);

  auto bgrad = server_backward(server, grad.message);
  EXPECT_TRUE(server.caches.empty());
  EXPECT_NE(server.layers, server_before);
  EXPECT_TRUE(bgrad.boundary_grads.same_shape(up->activations));

  client_backward(client, bgrad);
  EXPECT_TRUE(client.pending.empty());
  EXPECT_NE(client.layers, before);
}

TEST(Nodes, ProtocolStateErrors) {
  const auto spec = small_spec();
  auto client = make_client(0, 30, 6);
  ServerState server(server_part(spec), spec.learning_rate);
  client.sampler.begin_epoch(0);
  auto up = client_forward(client, 0);
  EXPECT_THROW(client_forward(client, 0), ProtocolStateError);
  server_forward(server, *up);
  EXPECT_THROW(server_forward(server, *up), ProtocolStateError);
  EXPECT_THROW(client_grad(client, OutputDown{0, 9, Matrix(6, 3)}), ProtocolStateError);
  EXPECT_THROW(server_backward(server, GradientUp{0, 9, Matrix(6, 3)}), ProtocolStateError);
  EXPECT_THROW(client_backward(client, BoundaryGradDown{0, 9, Matrix(6, 4)}), ProtocolStateError);
  // Boundary gradient before the loss was taken on that batch.
  EXPECT_THROW(client_backward(client, BoundaryGradDown{0, 0, Matrix(6, 4)}), ProtocolStateError);
  EXPECT_THROW(server_forward(server, ActivationUp{1, 0, Matrix(6, 5)}), DimensionError);
}

TEST(Nodes, EpochEndIsNotAnError) {
  auto client = make_client(0, 10, 4);
  client.sampler.begin_epoch(0);
  EXPECT_TRUE(client_forward(client, 0));
  EXPECT_TRUE(client_forward(client, 1));
  EXPECT_FALSE(client_forward(client, 2));
}

TEST(SyncL1, IdenticalLayersUnchanged) {
  std::vector<ClientState> clients{make_client(0, 20, 2), make_client(1, 20, 2)};
  const Layers before = clients[0].layers;
  EXPECT_TRUE(sync_l1(SyncPolicy::average_every(1), clients, 1));
  EXPECT_EQ(clients[0].layers, before);
  EXPECT_EQ(clients[1].layers, before);
}

TEST(SyncL1, TwoClientsAverage) {
  std::vector<ClientState> clients{make_client(0, 20, 2), make_client(1, 20, 2)};
  for (auto& c : clients) c.layers = {DenseLayer{Matrix(1, 1), Matrix(1, 1), Activation::relu}};
  clients[1].layers[0].W(0, 0) = 2;
  average_client_layers(clients);
  EXPECT_EQ(clients[0].layers[0].W(0, 0), 1.0);
  EXPECT_EQ(clients[1].layers[0].W(0, 0), 1.0);
}

TEST(SyncL1, PolicyScheduling) {
  std::vector<ClientState> clients{make_client(0, 20, 2), make_client(1, 20, 2)};
  EXPECT_FALSE(sync_l1(SyncPolicy::none(), clients, 5));
  EXPECT_FALSE(sync_l1(SyncPolicy::average_every(5), clients, 4));
  EXPECT_TRUE(sync_l1(SyncPolicy::average_every(5), clients, 10));
  EXPECT_THROW(SyncPolicy::average_every(0).validate(), ValidationError);
}
