#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace fcl {

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for the stream identified by (base, parts...). Order of parts matters.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t h = mix64(base);
  for (auto p : parts) h = mix64(h ^ mix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

// Stream tags keep derived seeds for different purposes apart.
enum class Stream : std::uint64_t {
  init = 1,
  data = 2,
  partition = 3,
  split = 4,
  labels = 5,
  device_round = 6,
  selection = 7,
  remote_bank = 8,
  upload = 9,
  head = 10,
  finetune = 11,
};

inline std::uint64_t derive_seed(std::uint64_t base, Stream s, std::initializer_list<std::uint64_t> parts = {}) noexcept {
  std::uint64_t h = derive_seed(base, {static_cast<std::uint64_t>(s)});
  for (auto p : parts) h = mix64(h ^ mix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

/// Seeded random source. Every random decision in the library flows through one of these.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return mean + stddev * normal_(engine_);
  }
  /// Uniform index in [0, n).
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
  bool bernoulli(double p) { return uniform() < p; }
  double gamma(double shape) { return std::gamma_distribution<double>(shape, 1.0)(engine_); }

  template <typename It>
  void shuffle(It first, It last) {
    // Fisher-Yates with our own index draws; std::shuffle's draw pattern is library-specific.
    auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j = index(i);
      std::swap(first[i - 1], first[j]);
    }
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace fcl
