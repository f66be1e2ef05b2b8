#pragma once

// Dense kernels behind the affine layers and the contrastive logits.
//
// `serial` is the reference implementation. `parallel` splits the outermost
// output loop across OpenMP threads; every output element is still reduced in
// the same order as the reference, so the two agree bit for bit and results do
// not depend on the thread count.

#include <cstddef>
#include <span>

namespace fcl::kernels {

namespace serial {

/// y[b, o] = bias[o] + sum_i x[b, i] * w[o, i]
void affine_forward(std::span<const double> x, std::span<const double> w, std::span<const double> bias,
                    std::size_t batch, std::size_t in, std::size_t out, std::span<double> y);

/// dx[b, i] = sum_o dy[b, o] * w[o, i]
void affine_backward_input(std::span<const double> dy, std::span<const double> w, std::size_t batch,
                           std::size_t in, std::size_t out, std::span<double> dx);

/// dw[o, i] = sum_b dy[b, o] * x[b, i];  dbias[o] = sum_b dy[b, o]
void affine_backward_params(std::span<const double> dy, std::span<const double> x, std::size_t batch,
                            std::size_t in, std::size_t out, std::span<double> dw, std::span<double> dbias);

/// c[r, s] = sum_k a[r, k] * b[s, k]   (A Bᵀ, both operands row-major)
void matmul_transposed(std::span<const double> a, std::span<const double> b, std::size_t rows_a,
                       std::size_t rows_b, std::size_t inner, std::span<double> c);

}  // namespace serial

namespace parallel {

void affine_forward(std::span<const double> x, std::span<const double> w, std::span<const double> bias,
                    std::size_t batch, std::size_t in, std::size_t out, std::span<double> y);
void affine_backward_input(std::span<const double> dy, std::span<const double> w, std::size_t batch,
                           std::size_t in, std::size_t out, std::span<double> dx);
void affine_backward_params(std::span<const double> dy, std::span<const double> x, std::size_t batch,
                            std::size_t in, std::size_t out, std::span<double> dw, std::span<double> dbias);
void matmul_transposed(std::span<const double> a, std::span<const double> b, std::size_t rows_a,
                       std::size_t rows_b, std::size_t inner, std::span<double> c);

}  // namespace parallel

/// Below this many multiply-adds the parallel kernels stay on the calling thread.
inline constexpr std::size_t kParallelWorkThreshold = 1U << 15;

}  // namespace fcl::kernels
