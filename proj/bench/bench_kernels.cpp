#include <benchmark/benchmark.h>

#include <vector>

#include "fcl/kernels.hpp"
#include "fcl/rng.hpp"

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  fcl::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

struct AffineCase {
  std::size_t batch, in, out;
  std::vector<double> x, w, b, dy;

  explicit AffineCase(const benchmark::State& state)
      : batch(static_cast<std::size_t>(state.range(0))),
        in(static_cast<std::size_t>(state.range(1))),
        out(static_cast<std::size_t>(state.range(2))),
        x(random_values(batch * in, 1)),
        w(random_values(out * in, 2)),
        b(random_values(out, 3)),
        dy(random_values(batch * out, 4)) {}
};

template <auto Forward>
void BM_AffineForward(benchmark::State& state) {
  AffineCase c(state);
  std::vector<double> y(c.batch * c.out);
  for (auto _ : state) {
    Forward(c.x, c.w, c.b, c.batch, c.in, c.out, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * c.batch * c.in * c.out));
}

template <auto BackwardInput, auto BackwardParams>
void BM_AffineBackward(benchmark::State& state) {
  AffineCase c(state);
  std::vector<double> dx(c.batch * c.in), dw(c.out * c.in), db(c.out);
  for (auto _ : state) {
    BackwardInput(c.dy, c.w, c.batch, c.in, c.out, dx);
    BackwardParams(c.dy, c.x, c.batch, c.in, c.out, dw, db);
    benchmark::DoNotOptimize(dx.data());
    benchmark::DoNotOptimize(dw.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 2 * c.batch * c.in * c.out));
}

template <auto Matmul>
void BM_MatmulTransposed(benchmark::State& state) {
  const auto rows_a = static_cast<std::size_t>(state.range(0));
  const auto rows_b = static_cast<std::size_t>(state.range(1));
  const auto inner = static_cast<std::size_t>(state.range(2));
  const auto a = random_values(rows_a * inner, 5);
  const auto b = random_values(rows_b * inner, 6);
  std::vector<double> c(rows_a * rows_b);
  for (auto _ : state) {
    Matmul(a, b, rows_a, rows_b, inner, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * rows_a * rows_b * inner));
}

void affine_sizes(benchmark::internal::Benchmark* b) {
  b->Args({16, 256, 128})->Args({128, 256, 128})->Args({256, 128, 128})->Args({1024, 256, 128});
}

void logit_sizes(benchmark::internal::Benchmark* b) {
  b->Args({16, 256, 32})->Args({16, 576, 32})->Args({128, 4096, 128});
}

}  // namespace

BENCHMARK(BM_AffineForward<fcl::kernels::serial::affine_forward>)->Apply(affine_sizes);
BENCHMARK(BM_AffineForward<fcl::kernels::parallel::affine_forward>)->Apply(affine_sizes);
BENCHMARK(BM_AffineBackward<fcl::kernels::serial::affine_backward_input, fcl::kernels::serial::affine_backward_params>)
    ->Apply(affine_sizes);
BENCHMARK(BM_AffineBackward<fcl::kernels::parallel::affine_backward_input, fcl::kernels::parallel::affine_backward_params>)
    ->Apply(affine_sizes);
BENCHMARK(BM_MatmulTransposed<fcl::kernels::serial::matmul_transposed>)->Apply(logit_sizes);
BENCHMARK(BM_MatmulTransposed<fcl::kernels::parallel::matmul_transposed>)->Apply(logit_sizes);

BENCHMARK_MAIN();
