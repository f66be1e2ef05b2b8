#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <vector>

#include "fcl/kernels.hpp"
#include "fcl/rng.hpp"

namespace k = fcl::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  fcl::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

struct Dims {
  std::size_t batch, in, out;
};

// Both sides of the work threshold, plus awkward sizes.
const Dims kDims[] = {{1, 1, 1}, {3, 5, 7}, {16, 256, 128}, {64, 128, 128}, {33, 97, 61}};

}  // namespace

TEST_CASE("affine_forward serial matches a direct loop") {
  const std::size_t batch = 4, in = 8, out = 3;
  const auto x = random_values(batch * in, 1), w = random_values(out * in, 2), b = random_values(out, 3);
  std::vector<double> y(batch * out);
  k::serial::affine_forward(x, w, b, batch, in, out, y);
  for (std::size_t r = 0; r < batch; ++r)
    for (std::size_t o = 0; o < out; ++o) {
      double s = b[o];
      for (std::size_t i = 0; i < in; ++i) s += x[r * in + i] * w[o * in + i];
      CHECK(y[r * out + o] == doctest::Approx(s).epsilon(1e-14));
    }
}

TEST_CASE("parallel kernels are bit-identical to serial") {
  for (const auto& d : kDims) {
    CAPTURE(d.batch);
    CAPTURE(d.in);
    CAPTURE(d.out);
    const auto x = random_values(d.batch * d.in, 10), w = random_values(d.out * d.in, 11);
    const auto b = random_values(d.out, 12), dy = random_values(d.batch * d.out, 13);

    std::vector<double> ys(d.batch * d.out), yp(d.batch * d.out);
    k::serial::affine_forward(x, w, b, d.batch, d.in, d.out, ys);
    k::parallel::affine_forward(x, w, b, d.batch, d.in, d.out, yp);
    CHECK(bitwise_equal(ys, yp));

    std::vector<double> dxs(d.batch * d.in), dxp(d.batch * d.in);
    k::serial::affine_backward_input(dy, w, d.batch, d.in, d.out, dxs);
    k::parallel::affine_backward_input(dy, w, d.batch, d.in, d.out, dxp);
    CHECK(bitwise_equal(dxs, dxp));

    std::vector<double> dws(d.out * d.in), dwp(d.out * d.in), dbs(d.out), dbp(d.out);
    k::serial::affine_backward_params(dy, x, d.batch, d.in, d.out, dws, dbs);
    k::parallel::affine_backward_params(dy, x, d.batch, d.in, d.out, dwp, dbp);
    CHECK(bitwise_equal(dws, dwp));
    CHECK(bitwise_equal(dbs, dbp));

    std::vector<double> cs(d.batch * d.out), cp(d.batch * d.out);
    k::serial::matmul_transposed(x, w, d.batch, d.out, d.in, cs);
    k::parallel::matmul_transposed(x, w, d.batch, d.out, d.in, cp);
    CHECK(bitwise_equal(cs, cp));
  }
}

TEST_CASE("backward kernels match their definitions") {
  const std::size_t batch = 3, in = 4, out = 2;
  const auto x = random_values(batch * in, 20), w = random_values(out * in, 21), dy = random_values(batch * out, 22);
  std::vector<double> dx(batch * in), dw(out * in), db(out);
  k::serial::affine_backward_input(dy, w, batch, in, out, dx);
  k::serial::affine_backward_params(dy, x, batch, in, out, dw, db);
  for (std::size_t r = 0; r < batch; ++r)
    for (std::size_t i = 0; i < in; ++i) {
      double s = 0.0;
      for (std::size_t o = 0; o < out; ++o) s += dy[r * out + o] * w[o * in + i];
      CHECK(dx[r * in + i] == doctest::Approx(s).epsilon(1e-14));
    }
  for (std::size_t o = 0; o < out; ++o) {
    double sb = 0.0;
    for (std::size_t r = 0; r < batch; ++r) sb += dy[r * out + o];
    CHECK(db[o] == doctest::Approx(sb).epsilon(1e-14));
    for (std::size_t i = 0; i < in; ++i) {
      double s = 0.0;
      for (std::size_t r = 0; r < batch; ++r) s += dy[r * out + o] * x[r * in + i];
      CHECK(dw[o * in + i] == doctest::Approx(s).epsilon(1e-14));
    }
  }
}
