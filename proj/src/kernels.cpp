#include "splitnn/kernels.hpp"

#include <cmath>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace splitnn::kernels {

namespace {

using Index = std::int64_t;

// Per-element bodies shared by both flavours. Keeping them in one place is
// what makes serial and parallel results bitwise equal.

inline double affine_at(const Matrix& X, const Matrix& W, const Matrix& b, std::size_t r,
                        std::size_t o) {
  const double* x = X.data() + r * X.cols();
  const double* w = W.data() + o * W.cols();
  double acc = 0.0;
  for (std::size_t i = 0; i < X.cols(); ++i) acc += x[i] * w[i];
  return acc + b.data()[o];
}

inline double matmul_tn_at(const Matrix& A, const Matrix& B, std::size_t i, std::size_t j) {
  double acc = 0.0;
  for (std::size_t r = 0; r < A.rows(); ++r) acc += A(r, i) * B(r, j);
  return acc;
}

inline double matmul_nn_at(const Matrix& A, const Matrix& B, std::size_t i, std::size_t j) {
  const double* a = A.data() + i * A.cols();
  double acc = 0.0;
  for (std::size_t k = 0; k < A.cols(); ++k) acc += a[k] * B(k, j);
  return acc;
}

inline double column_sum_at(const Matrix& A, std::size_t j) {
  double acc = 0.0;
  for (std::size_t r = 0; r < A.rows(); ++r) acc += A(r, j);
  return acc;
}

inline double activate_at(Activation act, double z) {
  switch (act) {
    case Activation::relu:
      return z > 0.0 ? z : 0.0;
    case Activation::tanh:
      return std::tanh(z);
    case Activation::identity:
    case Activation::softmax_output:
      return z;
  }
  return z;
}

inline double activate_backward_at(Activation act, double z, double a, double da) {
  switch (act) {
    case Activation::relu:
      return z > 0.0 ? da : 0.0;
    case Activation::tanh:
      return da * (1.0 - a * a);
    case Activation::identity:
    case Activation::softmax_output:
      return da;
  }
  return da;
}

}  // namespace

bool openmp_enabled() noexcept {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() noexcept {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace serial {

void affine(const Matrix& X, const Matrix& W, const Matrix& b, Matrix& out) {
  for (std::size_t r = 0; r < X.rows(); ++r)
    for (std::size_t o = 0; o < W.rows(); ++o) out(r, o) = affine_at(X, W, b, r, o);
}

void matmul_tn(const Matrix& A, const Matrix& B, Matrix& out) {
  for (std::size_t i = 0; i < A.cols(); ++i)
    for (std::size_t j = 0; j < B.cols(); ++j) out(i, j) = matmul_tn_at(A, B, i, j);
}

void matmul_nn(const Matrix& A, const Matrix& B, Matrix& out) {
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < B.cols(); ++j) out(i, j) = matmul_nn_at(A, B, i, j);
}

void column_sum(const Matrix& A, Matrix& out) {
  for (std::size_t j = 0; j < A.cols(); ++j) out.data()[j] = column_sum_at(A, j);
}

void activate(Activation act, const Matrix& Z, Matrix& A) {
  for (std::size_t i = 0; i < Z.size(); ++i) A.data()[i] = activate_at(act, Z.data()[i]);
}

void activate_backward(Activation act, const Matrix& Z, const Matrix& A, const Matrix& dA,
                       Matrix& dZ) {
  for (std::size_t i = 0; i < Z.size(); ++i)
    dZ.data()[i] = activate_backward_at(act, Z.data()[i], A.data()[i], dA.data()[i]);
}

void scaled_subtract(double alpha, const Matrix& x, Matrix& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y.data()[i] -= alpha * x.data()[i];
}

}  // namespace serial

namespace parallel {

void affine(const Matrix& X, const Matrix& W, const Matrix& b, Matrix& out) {
  const Index rows = static_cast<Index>(X.rows());
  const Index outs = static_cast<Index>(W.rows());
  if (X.rows() * W.rows() * X.cols() < kParallelThreshold) return serial::affine(X, W, b, out);
#pragma omp parallel for collapse(2) schedule(static)
  for (Index r = 0; r < rows; ++r)
    for (Index o = 0; o < outs; ++o) out(r, o) = affine_at(X, W, b, r, o);
}

void matmul_tn(const Matrix& A, const Matrix& B, Matrix& out) {
  const Index n = static_cast<Index>(A.cols());
  const Index m = static_cast<Index>(B.cols());
  if (A.cols() * B.cols() * A.rows() < kParallelThreshold) return serial::matmul_tn(A, B, out);
#pragma omp parallel for collapse(2) schedule(static)
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) out(i, j) = matmul_tn_at(A, B, i, j);
}

void matmul_nn(const Matrix& A, const Matrix& B, Matrix& out) {
  const Index n = static_cast<Index>(A.rows());
  const Index m = static_cast<Index>(B.cols());
  if (A.rows() * B.cols() * A.cols() < kParallelThreshold) return serial::matmul_nn(A, B, out);
#pragma omp parallel for collapse(2) schedule(static)
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) out(i, j) = matmul_nn_at(A, B, i, j);
}

void column_sum(const Matrix& A, Matrix& out) {
  const Index m = static_cast<Index>(A.cols());
  if (A.size() < kParallelThreshold) return serial::column_sum(A, out);
#pragma omp parallel for schedule(static)
  for (Index j = 0; j < m; ++j) out.data()[j] = column_sum_at(A, j);
}

void activate(Activation act, const Matrix& Z, Matrix& A) {
  const Index n = static_cast<Index>(Z.size());
  if (Z.size() < kParallelThreshold) return serial::activate(act, Z, A);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) A.data()[i] = activate_at(act, Z.data()[i]);
}

void activate_backward(Activation act, const Matrix& Z, const Matrix& A, const Matrix& dA,
                       Matrix& dZ) {
  const Index n = static_cast<Index>(Z.size());
  if (Z.size() < kParallelThreshold) return serial::activate_backward(act, Z, A, dA, dZ);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i)
    dZ.data()[i] = activate_backward_at(act, Z.data()[i], A.data()[i], dA.data()[i]);
}

void scaled_subtract(double alpha, const Matrix& x, Matrix& y) {
  const Index n = static_cast<Index>(x.size());
  if (x.size() < kParallelThreshold) return serial::scaled_subtract(alpha, x, y);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) y.data()[i] -= alpha * x.data()[i];
}

}  // namespace parallel

}  // namespace splitnn::kernels
