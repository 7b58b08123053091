#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "splitnn/kernels.hpp"
#include "splitnn/matrix.hpp"
#include "splitnn/types.hpp"

namespace splitnn {

std::string_view to_string(Activation a) noexcept;
/// Accepts the hidden activations only (relu, tanh, identity).
std::optional<Activation> parse_hidden_activation(std::string_view s) noexcept;

/// Shape and hyper-parameters of the full network. Layers 1..split_index live
/// on the clients, split_index+1..k on the server.
struct ModelSpec {
  std::vector<std::size_t> dims;  // d_0 (input width) .. d_k (class count)
  Activation hidden_activation = Activation::relu;
  std::size_t split_index = 1;
  std::uint64_t seed = 0;
  double learning_rate = 0.01;
  Precision precision = Precision::f64;

  std::size_t layer_count() const noexcept { return dims.empty() ? 0 : dims.size() - 1; }
  std::size_t input_width() const { return dims.front(); }
  std::size_t class_count() const { return dims.back(); }
  std::size_t boundary_width() const { return dims.at(split_index); }

  /// Throws SpecError when the description is unusable.
  void validate() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct DenseLayer {
  Matrix W;  // fan_out x fan_in
  Matrix b;  // fan_out x 1
  Activation activation = Activation::identity;

  std::size_t fan_in() const noexcept { return W.cols(); }
  std::size_t fan_out() const noexcept { return W.rows(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

using Layers = std::vector<DenseLayer>;

/// Everything backward needs from one layer's forward pass over one batch.
struct ForwardCache {
  Matrix X;  // input
  Matrix Z;  // pre-activation
  Matrix A;  // post-activation
};

struct LayerGrads {
  Matrix dW;
  Matrix db;
  Matrix dX;
};

struct LossResult {
  double loss = 0.0;
  Matrix dlogits;
};

struct StepResult {
  Layers layers;
  double loss = 0.0;
};

/// Glorot-uniform weights, zero biases, hidden activation on every layer but
/// the last (softmax_output). Equal seeds give bitwise-equal layers.
Layers init_model(const ModelSpec& spec);

ForwardCache dense_forward(const DenseLayer& layer, const Matrix& X);

/// Gradients are sums over the batch rows; averaging lives in the loss.
LayerGrads dense_backward(const DenseLayer& layer, const ForwardCache& cache, const Matrix& dA);

/// Mean softmax cross-entropy over rows, with row-max subtraction.
LossResult softmax_xent(const Matrix& logits, std::span<const std::uint32_t> labels);

/// Row-wise softmax. Exposed for tests and evaluation.
Matrix softmax(const Matrix& logits);

DenseLayer sgd_step(const DenseLayer& layer, const Matrix& dW, const Matrix& db, double lr);

/// Forward through every layer, returning the per-layer caches.
std::vector<ForwardCache> forward_all(std::span<const DenseLayer> layers, const Matrix& X);

/// Argmax per row.
std::vector<std::uint32_t> predict(const Matrix& logits);

std::size_t count_correct(const Matrix& logits, std::span<const std::uint32_t> labels);

/// One full-network SGD step on a single machine. Reference semantics for the
/// split pipeline: all gradients are taken at the pre-step weights.
StepResult centralized_train_step(std::span<const DenseLayer> layers, const Matrix& X,
                                  std::span<const std::uint32_t> labels, double lr);

}  // namespace splitnn
