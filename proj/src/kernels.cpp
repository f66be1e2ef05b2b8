#include "fcl/kernels.hpp"

#include <cstdint>

namespace fcl::kernels {

namespace {

// Row kernels shared by both implementations so the reduction order is identical.

inline void affine_row(const double* xr, const double* w, const double* bias, std::size_t in, std::size_t out,
                       double* yr) {
  for (std::size_t o = 0; o < out; ++o) {
    const double* wr = w + o * in;
    double acc = 0.0;
    for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wr[i];
    yr[o] = acc + bias[o];
  }
}

inline void input_grad_row(const double* dyr, const double* w, std::size_t in, std::size_t out, double* dxr) {
  for (std::size_t i = 0; i < in; ++i) dxr[i] = 0.0;
  for (std::size_t o = 0; o < out; ++o) {
    const double g = dyr[o];
    const double* wr = w + o * in;
    for (std::size_t i = 0; i < in; ++i) dxr[i] += g * wr[i];
  }
}

inline void param_grad_row(const double* dy, const double* x, std::size_t batch, std::size_t in, std::size_t out,
                           std::size_t o, double* dwr, double* dbo) {
  for (std::size_t i = 0; i < in; ++i) dwr[i] = 0.0;
  double db = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double g = dy[b * out + o];
    const double* xr = x + b * in;
    db += g;
    for (std::size_t i = 0; i < in; ++i) dwr[i] += g * xr[i];
  }
  *dbo = db;
}

inline void dot_row(const double* ar, const double* b, std::size_t rows_b, std::size_t inner, double* cr) {
  for (std::size_t s = 0; s < rows_b; ++s) {
    const double* br = b + s * inner;
    double acc = 0.0;
    for (std::size_t k = 0; k < inner; ++k) acc += ar[k] * br[k];
    cr[s] = acc;
  }
}

}  // namespace

namespace serial {

void affine_forward(std::span<const double> x, std::span<const double> w, std::span<const double> bias,
                    std::size_t batch, std::size_t in, std::size_t out, std::span<double> y) {
  for (std::size_t b = 0; b < batch; ++b) affine_row(x.data() + b * in, w.data(), bias.data(), in, out, y.data() + b * out);
}

void affine_backward_input(std::span<const double> dy, std::span<const double> w, std::size_t batch, std::size_t in,
                           std::size_t out, std::span<double> dx) {
  for (std::size_t b = 0; b < batch; ++b) input_grad_row(dy.data() + b * out, w.data(), in, out, dx.data() + b * in);
}

void affine_backward_params(std::span<const double> dy, std::span<const double> x, std::size_t batch, std::size_t in,
                            std::size_t out, std::span<double> dw, std::span<double> dbias) {
  for (std::size_t o = 0; o < out; ++o)
    param_grad_row(dy.data(), x.data(), batch, in, out, o, dw.data() + o * in, dbias.data() + o);
}

void matmul_transposed(std::span<const double> a, std::span<const double> b, std::size_t rows_a, std::size_t rows_b,
                       std::size_t inner, std::span<double> c) {
  for (std::size_t r = 0; r < rows_a; ++r) dot_row(a.data() + r * inner, b.data(), rows_b, inner, c.data() + r * rows_b);
}

}  // namespace serial

namespace parallel {

void affine_forward(std::span<const double> x, std::span<const double> w, std::span<const double> bias,
                    std::size_t batch, std::size_t in, std::size_t out, std::span<double> y) {
  const auto n = static_cast<std::int64_t>(batch);
  const bool wide = batch * in * out >= kParallelWorkThreshold;
#pragma omp parallel for schedule(static) if (wide)
  for (std::int64_t b = 0; b < n; ++b)
    affine_row(x.data() + b * in, w.data(), bias.data(), in, out, y.data() + b * out);
}

void affine_backward_input(std::span<const double> dy, std::span<const double> w, std::size_t batch, std::size_t in,
                           std::size_t out, std::span<double> dx) {
  const auto n = static_cast<std::int64_t>(batch);
  const bool wide = batch * in * out >= kParallelWorkThreshold;
#pragma omp parallel for schedule(static) if (wide)
  for (std::int64_t b = 0; b < n; ++b) input_grad_row(dy.data() + b * out, w.data(), in, out, dx.data() + b * in);
}

void affine_backward_params(std::span<const double> dy, std::span<const double> x, std::size_t batch, std::size_t in,
                            std::size_t out, std::span<double> dw, std::span<double> dbias) {
  const auto n = static_cast<std::int64_t>(out);
  const bool wide = batch * in * out >= kParallelWorkThreshold;
#pragma omp parallel for schedule(static) if (wide)
  for (std::int64_t o = 0; o < n; ++o)
    param_grad_row(dy.data(), x.data(), batch, in, out, static_cast<std::size_t>(o), dw.data() + o * in,
                   dbias.data() + o);
}

void matmul_transposed(std::span<const double> a, std::span<const double> b, std::size_t rows_a, std::size_t rows_b,
                       std::size_t inner, std::span<double> c) {
  const auto n = static_cast<std::int64_t>(rows_a);
  const bool wide = rows_a * rows_b * inner >= kParallelWorkThreshold;
#pragma omp parallel for schedule(static) if (wide)
  for (std::int64_t r = 0; r < n; ++r) dot_row(a.data() + r * inner, b.data(), rows_b, inner, c.data() + r * rows_b);
}

}  // namespace parallel

}  // namespace fcl::kernels
