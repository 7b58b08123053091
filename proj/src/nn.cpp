#include "splitnn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "splitnn/error.hpp"

namespace splitnn {

namespace k = kernels::parallel;

std::string_view to_string(Precision p) noexcept { return p == Precision::f32 ? "f32" : "f64"; }

std::optional<Precision> parse_precision(std::string_view s) noexcept {
  if (s == "f32") return Precision::f32;
  if (s == "f64") return Precision::f64;
  return std::nullopt;
}

std::string_view to_string(Activation a) noexcept {
  switch (a) {
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
    case Activation::identity:
      return "identity";
    case Activation::softmax_output:
      return "softmax_output";
  }
  return "?";
}

std::optional<Activation> parse_hidden_activation(std::string_view s) noexcept {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  return std::nullopt;
}

void ModelSpec::validate() const {
  if (dims.size() < 3) {
    throw SpecError("dims must list at least an input width, one hidden layer and an output layer");
  }
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i] == 0) throw SpecError("dims[" + std::to_string(i) + "] must be positive");
  }
  if (hidden_activation == Activation::softmax_output) {
    throw SpecError("softmax_output is reserved for the output layer");
  }
  const std::size_t k = layer_count();
  if (split_index < 1 || split_index > k - 1) {
    throw SpecError("split_index must lie in [1, " + std::to_string(k - 1) + "]");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw SpecError("learning_rate must be a positive finite number");
  }
}

Layers init_model(const ModelSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  Layers layers;
  layers.reserve(spec.layer_count());
  for (std::size_t i = 1; i < spec.dims.size(); ++i) {
    const std::size_t fan_in = spec.dims[i - 1];
    const std::size_t fan_out = spec.dims[i];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer;
    layer.W = Matrix(fan_out, fan_in);
    for (double& w : layer.W.values()) w = dist(rng);
    layer.b = Matrix(fan_out, 1);
    layer.activation =
        i + 1 == spec.dims.size() ? Activation::softmax_output : spec.hidden_activation;
    layers.push_back(std::move(layer));
  }
  return layers;
}

ForwardCache dense_forward(const DenseLayer& layer, const Matrix& X) {
  if (X.cols() != layer.fan_in()) {
    throw DimensionError("dense_forward: input has " + std::to_string(X.cols()) +
                         " columns, layer expects " + std::to_string(layer.fan_in()));
  }
  if (layer.b.rows() != layer.fan_out() || layer.b.cols() != 1) {
    throw DimensionError("dense_forward: bias shape does not match weights");
  }
  ForwardCache cache{X, Matrix(X.rows(), layer.fan_out()), Matrix(X.rows(), layer.fan_out())};
  k::affine(X, layer.W, layer.b, cache.Z);
  k::activate(layer.activation, cache.Z, cache.A);
  ensure_finite(cache.A, "dense_forward output");
  return cache;
}

LayerGrads dense_backward(const DenseLayer& layer, const ForwardCache& cache, const Matrix& dA) {
  require_same_shape(dA, cache.A, "dense_backward: upstream gradient");
  if (cache.X.cols() != layer.fan_in() || cache.Z.cols() != layer.fan_out()) {
    throw DimensionError("dense_backward: cache does not belong to this layer");
  }
  Matrix dZ(dA.rows(), dA.cols());
  k::activate_backward(layer.activation, cache.Z, cache.A, dA, dZ);

  LayerGrads grads{Matrix(layer.fan_out(), layer.fan_in()), Matrix(layer.fan_out(), 1),
                   Matrix(cache.X.rows(), layer.fan_in())};
  k::matmul_tn(dZ, cache.X, grads.dW);
  k::column_sum(dZ, grads.db);
  k::matmul_nn(dZ, layer.W, grads.dX);
  return grads;
}

Matrix softmax(const Matrix& logits) {
  Matrix probs(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto in = logits.row(r);
    auto out = probs.row(r);
    const double peak = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      out[c] = std::exp(in[c] - peak);
      total += out[c];
    }
    for (double& p : out) p /= total;
  }
  return probs;
}

LossResult softmax_xent(const Matrix& logits, std::span<const std::uint32_t> labels) {
  if (logits.rows() != labels.size()) {
    throw DimensionError("softmax_xent: " + std::to_string(logits.rows()) + " rows but " +
                         std::to_string(labels.size()) + " labels");
  }
  if (logits.rows() == 0) throw DimensionError("softmax_xent: empty batch");
  for (std::uint32_t label : labels) {
    if (label >= logits.cols()) {
      throw ValidationError("label " + std::to_string(label) + " out of range for " +
                            std::to_string(logits.cols()) + " classes");
    }
  }

  const double rows = static_cast<double>(logits.rows());
  LossResult result{0.0, Matrix(logits.rows(), logits.cols())};
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto in = logits.row(r);
    auto grad = result.dlogits.row(r);
    const double peak = *std::max_element(in.begin(), in.end());
    double denom = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      grad[c] = std::exp(in[c] - peak);
      denom += grad[c];
    }
    total += std::log(denom) - (in[labels[r]] - peak);
    for (double& g : grad) g /= denom;
    grad[labels[r]] -= 1.0;
    for (double& g : grad) g /= rows;
  }
  result.loss = total / rows;
  if (!std::isfinite(result.loss)) throw NumericError("softmax_xent: non-finite loss");
  ensure_finite(result.dlogits, "softmax_xent gradient");
  return result;
}

DenseLayer sgd_step(const DenseLayer& layer, const Matrix& dW, const Matrix& db, double lr) {
  require_same_shape(dW, layer.W, "sgd_step: weight gradient");
  require_same_shape(db, layer.b, "sgd_step: bias gradient");
  DenseLayer next = layer;
  k::scaled_subtract(lr, dW, next.W);
  k::scaled_subtract(lr, db, next.b);
  ensure_finite(next.W, "sgd_step weights");
  ensure_finite(next.b, "sgd_step biases");
  return next;
}

std::vector<ForwardCache> forward_all(std::span<const DenseLayer> layers, const Matrix& X) {
  std::vector<ForwardCache> caches;
  caches.reserve(layers.size());
  const Matrix* input = &X;
  for (const auto& layer : layers) {
    caches.push_back(dense_forward(layer, *input));
    input = &caches.back().A;
  }
  return caches;
}

std::vector<std::uint32_t> predict(const Matrix& logits) {
  std::vector<std::uint32_t> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    out[r] = static_cast<std::uint32_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

std::size_t count_correct(const Matrix& logits, std::span<const std::uint32_t> labels) {
  const auto guesses = predict(logits);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < guesses.size() && i < labels.size(); ++i) {
    if (guesses[i] == labels[i]) ++correct;
  }
  return correct;
}

StepResult centralized_train_step(std::span<const DenseLayer> layers, const Matrix& X,
                                  std::span<const std::uint32_t> labels, double lr) {
  if (layers.empty()) throw SpecError("centralized_train_step: no layers");
  const auto caches = forward_all(layers, X);
  auto loss = softmax_xent(caches.back().A, labels);

  std::vector<LayerGrads> grads(layers.size());
  Matrix upstream = std::move(loss.dlogits);
  for (std::size_t i = layers.size(); i-- > 0;) {
    grads[i] = dense_backward(layers[i], caches[i], upstream);
    upstream = grads[i].dX;
  }

  StepResult result{{}, loss.loss};
  result.layers.reserve(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    result.layers.push_back(sgd_step(layers[i], grads[i].dW, grads[i].db, lr));
  }
  return result;
}

}  // namespace splitnn
