#pragma once

// Dense-layer compute kernels in two flavours with identical numerics:
//
//   kernels::serial    plain loops, the reference the tests check against
//   kernels::parallel  the same loops distributed with OpenMP
//
// Every output element is produced by exactly one thread with a fixed
// accumulation order, so both flavours are bitwise identical for any thread
// count. Callers are responsible for shapes; the nn layer validates them.

#include <cstddef>

#include "splitnn/matrix.hpp"

namespace splitnn {

enum class Activation { relu, tanh, identity, softmax_output };

namespace kernels {

// Below this many multiply-adds the parallel flavour calls the serial loop.
inline constexpr std::size_t kParallelThreshold = 1 << 14;

bool openmp_enabled() noexcept;
int max_threads() noexcept;

namespace serial {
/// out = X * W^T + b (b broadcast across rows). out must be X.rows x W.rows.
void affine(const Matrix& X, const Matrix& W, const Matrix& b, Matrix& out);
/// out = A^T * B. out must be A.cols x B.cols.
void matmul_tn(const Matrix& A, const Matrix& B, Matrix& out);
/// out = A * B. out must be A.rows x B.cols.
void matmul_nn(const Matrix& A, const Matrix& B, Matrix& out);
/// out(j, 0) = sum_i A(i, j).
void column_sum(const Matrix& A, Matrix& out);
void activate(Activation act, const Matrix& Z, Matrix& A);
/// dZ = dA * act'(Z), using the cached post-activation A where cheaper.
void activate_backward(Activation act, const Matrix& Z, const Matrix& A, const Matrix& dA,
                       Matrix& dZ);
/// y -= alpha * x
void scaled_subtract(double alpha, const Matrix& x, Matrix& y);
}  // namespace serial

namespace parallel {
void affine(const Matrix& X, const Matrix& W, const Matrix& b, Matrix& out);
void matmul_tn(const Matrix& A, const Matrix& B, Matrix& out);
void matmul_nn(const Matrix& A, const Matrix& B, Matrix& out);
void column_sum(const Matrix& A, Matrix& out);
void activate(Activation act, const Matrix& Z, Matrix& A);
void activate_backward(Activation act, const Matrix& Z, const Matrix& A, const Matrix& dA,
                       Matrix& dZ);
void scaled_subtract(double alpha, const Matrix& x, Matrix& y);
}  // namespace parallel

}  // namespace kernels
}  // namespace splitnn
