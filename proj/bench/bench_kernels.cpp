// Serial vs OpenMP kernels on dense-layer shapes. Run with OMP_NUM_THREADS set
// to compare scaling; on a single core the two should be within noise.

#include <benchmark/benchmark.h>

#include <random>

#include "splitnn/kernels.hpp"

namespace {

using splitnn::Matrix;

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(r, c);
  for (double& v : m.values()) v = u(rng);
  return m;
}

// args: batch, in, out
template <bool Parallel>
void BM_Affine(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto in = static_cast<std::size_t>(state.range(1));
  const auto out = static_cast<std::size_t>(state.range(2));
  Matrix X = random_matrix(n, in, 1), W = random_matrix(out, in, 2), b = random_matrix(out, 1, 3);
  Matrix Z(n, out);
  for (auto _ : state) {
    if constexpr (Parallel) splitnn::kernels::parallel::affine(X, W, b, Z);
    else splitnn::kernels::serial::affine(X, W, b, Z);
    benchmark::DoNotOptimize(Z.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * in * out));
}

template <bool Parallel>
void BM_MatmulTN(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto in = static_cast<std::size_t>(state.range(1));
  const auto out = static_cast<std::size_t>(state.range(2));
  Matrix dZ = random_matrix(n, out, 4), X = random_matrix(n, in, 5);
  Matrix dW(out, in);
  for (auto _ : state) {
    if constexpr (Parallel) splitnn::kernels::parallel::matmul_tn(dZ, X, dW);
    else splitnn::kernels::serial::matmul_tn(dZ, X, dW);
    benchmark::DoNotOptimize(dW.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * in * out));
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({32, 784, 128})->Args({32, 128, 64})->Args({256, 784, 128})->Args({8, 16, 3});
}

}  // namespace

BENCHMARK(BM_Affine<false>)->Name("affine/serial")->Apply(shapes);
BENCHMARK(BM_Affine<true>)->Name("affine/parallel")->Apply(shapes);
BENCHMARK(BM_MatmulTN<false>)->Name("matmul_tn/serial")->Apply(shapes);
BENCHMARK(BM_MatmulTN<true>)->Name("matmul_tn/parallel")->Apply(shapes);

BENCHMARK_MAIN();
