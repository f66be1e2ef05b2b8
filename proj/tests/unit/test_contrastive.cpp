#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fcl/contrastive.hpp"
#include "fcl/error.hpp"
#include "fcl/model.hpp"
#include "fcl/rng.hpp"

using namespace fcl;

namespace {

FeatureVec unit(std::vector<double> v, int origin = 0) {
  double n = 0.0;
  for (double x : v) n += x * x;
  for (double& x : v) x /= std::sqrt(n);
  return {v, origin, 0};
}

FeatureVec random_unit(std::size_t d, Rng& rng, int origin = 0) {
  std::vector<double> v(d);
  for (auto& x : v) x = rng.normal();
  return unit(v, origin);
}

// Tagged placeholder feature: birth_round carries the identity.
FeatureVec tag(int id) { return {{1.0}, 0, id}; }

std::vector<int> ids(const MemoryBank& bank) {
  std::vector<int> out;
  for (const auto& f : bank.entries()) out.push_back(f.birth_round);
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("info_nce worked example: log(1 + e^-1)") {
  const FeatureVec q{{1.0, 0.0}}, k{{1.0, 0.0}}, n{{0.0, 1.0}};
  const std::vector<FeatureVec> negs{n};
  const auto r = info_nce(q, k, negs, 1.0);
  CHECK(std::abs(r.loss - 0.313262) < 1e-6);
  CHECK(r.loss == doctest::Approx(std::log1p(std::exp(-1.0))).epsilon(1e-15));
}

TEST_CASE("info_nce without negatives is exactly zero") {
  Rng rng(1);
  const auto q = random_unit(5, rng), k = random_unit(5, rng);
  const auto r = info_nce(q, k, std::span<const FeatureVec>{}, 0.07);
  CHECK(r.loss == 0.0);
  for (double g : r.grad_q) CHECK(g == 0.0);
}

TEST_CASE("info_nce equals cross-entropy over stacked logits") {
  Rng rng(7);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 2 + rng.index(8), n = 1 + rng.index(20);
    const double tau = rng.uniform(0.05, 2.0);
    const auto q = random_unit(d, rng), k = random_unit(d, rng);
    std::vector<FeatureVec> negs;
    for (std::size_t j = 0; j < n; ++j) negs.push_back(random_unit(d, rng));
    Tensor logits = Tensor::matrix(1, n + 1);
    logits(0, 0) = dot(q.values, k.values) / tau;
    for (std::size_t j = 0; j < n; ++j) logits(0, j + 1) = dot(q.values, negs[j].values) / tau;
    const std::vector<std::size_t> target{0};
    const double oracle = softmax_cross_entropy(logits, target).loss;
    worst = std::max(worst, std::abs(info_nce(q, k, negs, tau).loss - oracle));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("info_nce is nonnegative and invariant to negative order") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto q = random_unit(6, rng), k = random_unit(6, rng);
    std::vector<FeatureVec> negs;
    for (int j = 0; j < 9; ++j) negs.push_back(random_unit(6, rng));
    const double a = info_nce(q, k, negs, 0.1).loss;
    rng.shuffle(negs.begin(), negs.end());
    const double b = info_nce(q, k, negs, 0.1).loss;
    CHECK(a > 0.0);
    CHECK(std::abs(a - b) < 1e-12);
  }
}

TEST_CASE("info_nce gradients match finite differences") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 4;
    auto q = random_unit(d, rng), k = random_unit(d, rng);
    std::vector<FeatureVec> negs;
    for (int j = 0; j < 5; ++j) negs.push_back(random_unit(d, rng));
    const double tau = 0.5;
    const auto r = info_nce(q, k, negs, tau);
    const double eps = 1e-6;
    for (std::size_t i = 0; i < d; ++i) {
      for (auto* side : {&q, &k}) {
        const double saved = side->values[i];
        side->values[i] = saved + eps;
        const double lp = info_nce(q.values, k.values, negs, tau).loss;
        side->values[i] = saved - eps;
        const double lm = info_nce(q.values, k.values, negs, tau).loss;
        side->values[i] = saved;
        const double fd = (lp - lm) / (2 * eps);
        const double an = side == &q ? r.grad_q[i] : r.grad_k[i];
        CHECK(std::abs(fd - an) / std::max(1e-6, std::abs(fd) + std::abs(an)) < 1e-6);
      }
    }
  }
}

TEST_CASE("info_nce rejects bad inputs") {
  const std::vector<double> q{1.0, 0.0}, k{0.0, 1.0}, empty;
  CHECK_THROWS_AS(info_nce(q, k, std::span<const FeatureVec>{}, 0.0), ValidationError);
  CHECK_THROWS_AS(info_nce(empty, empty, std::span<const FeatureVec>{}, 0.07), ValidationError);
  const std::vector<FeatureVec> bad{FeatureVec{{1.0, 0.0, 0.0}}};
  CHECK_THROWS_AS(info_nce(q, k, bad, 0.07), ValidationError);
}

TEST_CASE("batched InfoNCE agrees with the single-pair form") {
  Rng rng(9);
  const std::size_t b = 3, d = 4, n = 5;
  Tensor qs = Tensor::matrix(b, d), ks = Tensor::matrix(b, d), ns = Tensor::matrix(n, d);
  std::vector<FeatureVec> negs;
  for (std::size_t j = 0; j < n; ++j) {
    negs.push_back(random_unit(d, rng));
    std::copy(negs[j].values.begin(), negs[j].values.end(), ns.row(j).begin());
  }
  std::vector<InfoNceResult> single;
  for (std::size_t r = 0; r < b; ++r) {
    const auto q = random_unit(d, rng), k = random_unit(d, rng);
    std::copy(q.values.begin(), q.values.end(), qs.row(r).begin());
    std::copy(k.values.begin(), k.values.end(), ks.row(r).begin());
    single.push_back(info_nce(q, k, negs, 0.2));
  }
  const auto batch = info_nce_batch(qs, ks, ns, 0.2);
  double mean = 0.0;
  for (std::size_t r = 0; r < b; ++r) {
    mean += single[r].loss / b;
    CHECK(batch.per_sample_loss[r] == doctest::Approx(single[r].loss).epsilon(1e-13));
    for (std::size_t i = 0; i < d; ++i) {
      CHECK(batch.grad_queries(r, i) == doctest::Approx(single[r].grad_q[i] / b).epsilon(1e-12));
      CHECK(batch.grad_keys(r, i) == doctest::Approx(single[r].grad_k[i] / b).epsilon(1e-12));
    }
  }
  CHECK(batch.loss == doctest::Approx(mean).epsilon(1e-13));
}

TEST_CASE("bank push evicts the oldest entries") {
  MemoryBank bank(4);
  const std::vector<FeatureVec> first{tag(0), tag(1), tag(2), tag(3)};
  bank.push(first);
  const std::vector<FeatureVec> more{tag(4), tag(5)};
  bank_push(bank, more);
  CHECK(ids(bank) == std::vector<int>{2, 3, 4, 5});

  std::vector<FeatureVec> many;
  for (int i = 10; i < 17; ++i) many.push_back(tag(i));
  bank.push(many);
  CHECK(ids(bank) == std::vector<int>{13, 14, 15, 16});

  bank.push(std::span<const FeatureVec>{});
  CHECK(ids(bank) == std::vector<int>{13, 14, 15, 16});
}

TEST_CASE("bank FIFO property over random push sequences") {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t cap = 1 + rng.index(12);
    MemoryBank bank(cap);
    std::vector<int> pushed;
    int next = 0;
    const std::size_t pushes = rng.index(10);
    for (std::size_t p = 0; p < pushes; ++p) {
      std::vector<FeatureVec> batch;
      const std::size_t len = rng.index(2 * cap + 1);
      for (std::size_t i = 0; i < len; ++i) {
        batch.push_back(tag(next));
        pushed.push_back(next++);
      }
      bank.push(batch);
      REQUIRE(bank.size() <= cap);
      const std::size_t keep = std::min(cap, pushed.size());
      REQUIRE(ids(bank) == std::vector<int>(pushed.end() - static_cast<std::ptrdiff_t>(keep), pushed.end()));
    }
  }
}

TEST_CASE("uniform bank sampling") {
  Rng rng(1);
  MemoryBank one(1);
  one.push(tag(42));
  const auto three = bank_sample_uniform(one, 3, rng);
  REQUIRE(three.size() == 3);
  for (const auto& f : three) CHECK(f == tag(42));

  MemoryBank empty(3);
  CHECK_THROWS_AS(bank_sample_uniform(empty, 1, rng), ValidationError);

  MemoryBank four(4);
  for (int i = 0; i < 4; ++i) four.push(tag(i));
  Rng a(5), b(5);
  CHECK(bank_sample_uniform(four, 50, a) == bank_sample_uniform(four, 50, b));

  const std::size_t draws = 100000;
  std::vector<std::size_t> counts(4, 0);
  Rng c(17);
  for (const auto& f : bank_sample_uniform(four, draws, c)) ++counts[static_cast<std::size_t>(f.birth_round)];
  const double sigma = std::sqrt(draws * 0.25 * 0.75);
  for (auto n : counts) CHECK(std::abs(static_cast<double>(n) - draws * 0.25) < 3 * sigma);
}

TEST_CASE("augment_pair with every op off returns the input twice") {
  const SampleShape shape{4, 4, 1};
  std::vector<double> x(shape.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = i / 16.0;
  Rng rng(3);
  const auto [a, b] = augment_pair(x, shape, AugmentationSpec::identity(), rng);
  CHECK(a == x);
  CHECK(b == x);
  CHECK(a.data() != x.data());
}

TEST_CASE("forced horizontal flip mirrors every row") {
  const SampleShape shape{3, 4, 2};
  std::vector<double> x(shape.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = i / 24.0;
  auto spec = AugmentationSpec::identity();
  spec.flip_probability = 1.0;
  Rng rng(3);
  const auto [a, b] = augment_pair(x, shape, spec, rng);
  std::vector<double> mirrored(x.size());
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t ch = 0; ch < 2; ++ch) mirrored[(r * 4 + c) * 2 + ch] = x[(r * 4 + (3 - c)) * 2 + ch];
  CHECK(a == mirrored);
  CHECK(b == mirrored);
}

TEST_CASE("augmentation is reproducible and the two views differ") {
  const SampleShape shape{16, 16, 1};
  std::vector<double> x(shape.size());
  Rng fill(2);
  for (auto& v : x) v = fill.uniform();
  Rng r1(8), r2(8);
  const auto p1 = augment_pair(x, shape, AugmentationSpec{}, r1);
  const auto p2 = augment_pair(x, shape, AugmentationSpec{}, r2);
  CHECK(p1 == p2);
  CHECK(p1.first != p1.second);
  for (double v : p1.first) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("momentum update arithmetic") {
  Architecture arch;
  arch.input_dim = 3;
  arch.encoder_widths = {4};
  arch.projection_hidden = 3;
  arch.feature_dim = 2;
  const auto main = init_params(arch, 1);
  const auto main_copy = main;
  auto mom = init_params(arch, 2);
  const auto before = mom;

  momentum_update(main, mom, 1.0);
  CHECK(mom == before);
  CHECK(main == main_copy);

  momentum_update(main, mom, 0.0);
  CHECK(mom == main);
  momentum_update(main, mom, 0.7);
  CHECK(mom == main);

  ModelParams one, zero;
  one.encoder.push_back(Layer{Tensor({1, 1}, 1.0), Tensor({1}, 1.0)});
  zero.encoder.push_back(Layer{Tensor({1, 1}, 0.0), Tensor({1}, 0.0)});
  momentum_update(one, zero, 0.99);
  CHECK(zero.encoder[0].weight[0] == doctest::Approx(0.01).epsilon(1e-14));

  CHECK_THROWS_AS(momentum_update(main, one, 0.5), ValidationError);
}
