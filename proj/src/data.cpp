#include "fcl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "binary_io.hpp"
#include "fcl/error.hpp"
#include "fcl/rng.hpp"

namespace fcl {

namespace detail {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(path.string() + ": read failed");
  return bytes;
}

void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path.string() + ": write failed");
}

}  // namespace detail

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.shape = shape;
  out.n_classes = n_classes;
  out.samples.reserve(indices.size() * shape.size());
  out.labels.reserve(indices.size());
  for (auto i : indices) {
    if (i >= size()) throw ValidationError("dataset subset: index " + std::to_string(i) + " out of range");
    auto s = sample(i);
    out.samples.insert(out.samples.end(), s.begin(), s.end());
    out.labels.push_back(labels[i]);
  }
  return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(n_classes, 0);
  for (auto l : labels)
    if (l < n_classes) ++counts[l];
  return counts;
}

void Dataset::validate() const {
  if (samples.size() != labels.size() * shape.size())
    throw ValidationError("dataset: " + std::to_string(samples.size()) + " values for " +
                          std::to_string(labels.size()) + " samples of size " + std::to_string(shape.size()));
  for (auto l : labels)
    if (l >= n_classes) throw ValidationError("dataset: label " + std::to_string(l) + " >= n_classes");
  for (float v : samples)
    if (!(v >= 0.0F && v <= 1.0F)) throw ValidationError("dataset: sample value outside [0, 1]");
}

Tensor to_batch(const Dataset& data, std::span<const std::size_t> indices) {
  const std::size_t d = data.shape.size();
  Tensor batch = Tensor::matrix(indices.size(), d);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    auto s = data.sample(indices[r]);
    auto row = batch.row(r);
    for (std::size_t c = 0; c < d; ++c) row[c] = static_cast<double>(s[c]);
  }
  return batch;
}

Tensor to_batch(const Dataset& data) {
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return to_batch(data, all);
}

std::vector<std::size_t> label_indices(const Dataset& data) {
  return {data.labels.begin(), data.labels.end()};
}

void SyntheticSpec::validate() const {
  if (n_classes == 0 || samples_per_class == 0 || shape.size() == 0)
    throw ValidationError("synthetic: class count, samples per class and shape must be positive");
  if (n_classes > 65535) throw ValidationError("synthetic: too many classes for u16 labels");
  if (jitter < 0.0) throw ValidationError("synthetic: jitter must be >= 0");
  for (double v : {shift_per_jitter, blob_offset_per_jitter, radius_per_jitter, amplitude_per_jitter,
                   background_per_jitter, noise_per_jitter, tone_per_jitter})
    if (!(v >= 0.0)) throw ValidationError("synthetic: per-jitter scales must be >= 0");
  if (!templates.empty() && templates.size() != n_classes)
    throw ValidationError("synthetic: template count does not match n_classes");
}

std::vector<ClassTemplate> default_templates(std::size_t n_classes) {
  std::vector<ClassTemplate> t = {
      {{{0.0, 0.0, 3.0, 1.0}}},
      {{{-3.5, 0.0, 1.6, 1.0}, {3.5, 0.0, 1.6, 1.0}}},
      {{{0.0, -3.5, 1.6, 1.0}, {0.0, 3.5, 1.6, 1.0}}},
      {{{0.0, -3.5, 1.4, 1.0}, {-3.2, 2.5, 1.4, 1.0}, {3.2, 2.5, 1.4, 1.0}}},
      {},
  };
  for (int k = 0; k < 8; ++k) {
    const double a = 2.0 * std::numbers::pi * k / 8.0;
    t[4].blobs.push_back({4.0 * std::cos(a), 4.0 * std::sin(a), 1.0, 0.9});
  }
  Rng rng(0x7e3a91);
  while (t.size() < n_classes) {
    ClassTemplate extra;
    const std::size_t count = 1 + rng.index(4);
    for (std::size_t b = 0; b < count; ++b)
      extra.blobs.push_back({rng.uniform(-4.5, 4.5), rng.uniform(-4.5, 4.5), rng.uniform(1.0, 2.5), rng.uniform(0.7, 1.0)});
    t.push_back(std::move(extra));
  }
  t.resize(n_classes);
  return t;
}

Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto templates = spec.templates.empty() ? default_templates(spec.n_classes) : spec.templates;
  const SampleShape& s = spec.shape;
  Dataset data;
  data.shape = s;
  data.n_classes = static_cast<std::uint32_t>(spec.n_classes);
  data.samples.reserve(spec.n_classes * spec.samples_per_class * s.size());
  Rng rng(derive_seed(seed, Stream::data));

  const double cy = (static_cast<double>(s.height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(s.width) - 1.0) / 2.0;
  const double max_shift = static_cast<double>(std::min(s.height, s.width)) / 4.0;
  const double j = spec.jitter;
  std::vector<double> pixels(s.height * s.width);

  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    for (std::size_t n = 0; n < spec.samples_per_class; ++n) {
      const double sy = j > 0.0 ? std::clamp(rng.normal(0.0, j * spec.shift_per_jitter), -max_shift, max_shift) : 0.0;
      const double sx = j > 0.0 ? std::clamp(rng.normal(0.0, j * spec.shift_per_jitter), -max_shift, max_shift) : 0.0;
      const double background = j > 0.0 ? rng.uniform(0.0, j * spec.background_per_jitter) : 0.0;
      const double tone = j > 0.0 && spec.tone_per_jitter > 0.0 ? rng.uniform(0.0, std::min(0.9, j * spec.tone_per_jitter)) : 0.0;
      std::fill(pixels.begin(), pixels.end(), background);
      for (const Blob& blob : templates[c].blobs) {
        const double by = cy + blob.dy + sy + (j > 0.0 ? rng.normal(0.0, j * spec.blob_offset_per_jitter) : 0.0);
        const double bx = cx + blob.dx + sx + (j > 0.0 ? rng.normal(0.0, j * spec.blob_offset_per_jitter) : 0.0);
        const double r =
            blob.radius * std::max(0.3, 1.0 + (j > 0.0 ? rng.normal(0.0, j * spec.radius_per_jitter) : 0.0));
        const double amp =
            blob.amplitude * (1.0 - std::min(0.8, j > 0.0 ? std::abs(rng.normal(0.0, j * spec.amplitude_per_jitter)) : 0.0));
        const double inv = 1.0 / (2.0 * r * r);
        for (std::size_t y = 0; y < s.height; ++y)
          for (std::size_t x = 0; x < s.width; ++x) {
            const double dy = static_cast<double>(y) - by;
            const double dx = static_cast<double>(x) - bx;
            pixels[y * s.width + x] += amp * std::exp(-(dx * dx + dy * dy) * inv);
          }
      }
      for (std::size_t p = 0; p < pixels.size(); ++p) {
        const double noisy = j > 0.0 ? pixels[p] + rng.normal(0.0, j * spec.noise_per_jitter) : pixels[p];
        const auto v = static_cast<float>(tone + (1.0 - tone) * std::clamp(noisy, 0.0, 1.0));
        for (std::size_t ch = 0; ch < s.channels; ++ch) data.samples.push_back(v);
      }
      data.labels.push_back(static_cast<std::uint16_t>(c));
    }
  }
  return data;
}

void PartitionSpec::validate() const {
  if (n_devices < 2) throw ValidationError("partition: n_devices must be >= 2");
  if (!(skew_param > 0.0)) throw ValidationError("partition: skew_param must be positive");
  if (skew_mode == SkewMode::dominant_class && skew_param > 1.0)
    throw ValidationError("partition: dominant-class fraction must be <= 1");
}

namespace {

std::vector<std::vector<std::size_t>> class_pools(const Dataset& data, Rng& rng) {
  std::vector<std::vector<std::size_t>> pools(data.n_classes);
  for (std::size_t i = 0; i < data.size(); ++i) pools[data.labels[i]].push_back(i);
  for (auto& p : pools) rng.shuffle(p.begin(), p.end());
  return pools;
}

std::vector<std::vector<std::size_t>> partition_dominant(const Dataset& data, const PartitionSpec& spec, Rng& rng) {
  const std::size_t n = data.size();
  const std::size_t d = spec.n_devices;
  auto pools = class_pools(data, rng);
  std::vector<std::vector<std::size_t>> parts(d);
  std::vector<std::size_t> target(d);
  for (std::size_t k = 0; k < d; ++k) target[k] = n / d + (k < n % d ? 1 : 0);

  for (std::size_t k = 0; k < d; ++k) {
    const std::size_t cls = k % data.n_classes;
    const auto quota = static_cast<std::size_t>(std::ceil(spec.skew_param * static_cast<double>(target[k]) - 1e-9));
    if (pools[cls].size() < quota)
      throw ValidationError("partition: class " + std::to_string(cls) + " cannot supply " + std::to_string(quota) +
                            " samples to device " + std::to_string(k));
    parts[k].assign(pools[cls].end() - static_cast<std::ptrdiff_t>(quota), pools[cls].end());
    pools[cls].resize(pools[cls].size() - quota);
  }
  std::vector<std::size_t> rest;
  for (const auto& p : pools) rest.insert(rest.end(), p.begin(), p.end());
  rng.shuffle(rest.begin(), rest.end());
  std::size_t cursor = 0;
  for (std::size_t k = 0; k < d; ++k)
    while (parts[k].size() < target[k]) parts[k].push_back(rest[cursor++]);
  return parts;
}

std::vector<std::vector<std::size_t>> partition_dirichlet(const Dataset& data, const PartitionSpec& spec, Rng& rng) {
  const std::size_t d = spec.n_devices;
  constexpr int kAttempts = 100;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    auto pools = class_pools(data, rng);
    std::vector<std::vector<std::size_t>> parts(d);
    for (const auto& pool : pools) {
      std::vector<double> p(d);
      double total = 0.0;
      for (auto& v : p) total += (v = rng.gamma(spec.skew_param));
      double cum = 0.0;
      std::size_t start = 0;
      for (std::size_t k = 0; k < d; ++k) {
        cum += p[k] / total;
        const std::size_t end =
            k + 1 == d ? pool.size() : std::min(pool.size(), static_cast<std::size_t>(std::lround(cum * static_cast<double>(pool.size()))));
        for (std::size_t i = start; i < end; ++i) parts[k].push_back(pool[i]);
        start = std::max(start, end);
      }
    }
    if (std::all_of(parts.begin(), parts.end(), [](const auto& p) { return !p.empty(); })) return parts;
  }
  throw ValidationError("partition: Dirichlet draws left a device empty in " + std::to_string(kAttempts) + " attempts");
}

}  // namespace

std::vector<std::vector<std::size_t>> partition_indices(const Dataset& data, const PartitionSpec& spec) {
  spec.validate();
  if (data.size() < spec.n_devices)
    throw ValidationError("partition: " + std::to_string(data.size()) + " samples cannot cover " +
                          std::to_string(spec.n_devices) + " devices");
  Rng rng(derive_seed(spec.seed, Stream::partition));
  auto parts = spec.skew_mode == SkewMode::dominant_class ? partition_dominant(data, spec, rng)
                                                          : partition_dirichlet(data, spec, rng);
  for (auto& p : parts) std::sort(p.begin(), p.end());
  return parts;
}

std::vector<Dataset> partition(const Dataset& data, const PartitionSpec& spec) {
  std::vector<Dataset> out;
  for (const auto& idx : partition_indices(data, spec)) out.push_back(data.subset(idx));
  return out;
}

std::vector<std::size_t> stratified_order(const Dataset& data, std::uint64_t seed) {
  Rng rng(seed);
  auto pools = class_pools(data, rng);
  std::vector<std::size_t> taken(pools.size(), 0);
  std::vector<std::size_t> order;
  order.reserve(data.size());
  while (order.size() < data.size()) {
    std::size_t best = pools.size();
    double best_priority = -1.0;
    for (std::size_t c = 0; c < pools.size(); ++c) {
      if (taken[c] == pools[c].size()) continue;
      const double priority = static_cast<double>(pools[c].size()) / (2.0 * static_cast<double>(taken[c]) + 1.0);
      if (priority > best_priority) {
        best_priority = priority;
        best = c;
      }
    }
    order.push_back(pools[best][taken[best]++]);
  }
  return order;
}

std::pair<TrainSplit, TestSplit> split_train_test(const Dataset& device_data, double ratio, std::uint64_t seed) {
  const std::size_t n = device_data.size();
  if (n < 2) throw ValidationError("split_train_test: need at least 2 samples");
  if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError("split_train_test: ratio must be in (0, 1)");
  auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 0.5));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  const auto order = stratified_order(device_data, derive_seed(seed, Stream::split));
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  TrainSplit tr{device_data.subset(train), train};
  TestSplit te{device_data.subset(test), test};
  return {std::move(tr), std::move(te)};
}

LabeledSubset label_subset(const TrainSplit& train, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("label_subset: fraction must be in (0, 1]");
  const std::size_t n = train.data.size();
  const auto m = std::min(n, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9)));
  const auto order = stratified_order(train.data, derive_seed(seed, Stream::labels));
  std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
  std::sort(chosen.begin(), chosen.end());
  return {train.data.subset(chosen), chosen};
}

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
  data.validate();
  detail::ByteWriter w;
  w.bytes("FDS1", 4);
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(data.size()));
  w.u32(static_cast<std::uint32_t>(data.shape.height));
  w.u32(static_cast<std::uint32_t>(data.shape.width));
  w.u32(static_cast<std::uint32_t>(data.shape.channels));
  w.u32(data.n_classes);
  for (float v : data.samples) w.f32(v);
  for (auto l : data.labels) w.u16(l);
  detail::write_file(path, w.buffer());
}

Dataset load_dataset(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  detail::ByteReader r(bytes, path.string());
  r.expect_magic("FDS1");
  const auto version = r.u32("version");
  if (version != 1) throw IoError(path.string() + ": unsupported dataset version " + std::to_string(version));
  Dataset data;
  const std::size_t n = r.u32("sample count");
  data.shape.height = r.u32("height");
  data.shape.width = r.u32("width");
  data.shape.channels = r.u32("channels");
  data.n_classes = r.u32("class count");
  const std::size_t sample_size = data.shape.size();
  if (sample_size == 0 || (n > 0 && sample_size > r.remaining() / 4 / n))
    throw IoError(path.string() + ": truncated or malformed header (payload larger than file)");
  const std::size_t values = n * sample_size;
  r.need(values * 4 + n * 2, "payload");
  data.samples.resize(values);
  for (auto& v : data.samples) v = r.f32("samples");
  data.labels.resize(n);
  for (auto& l : data.labels) l = r.u16("labels");
  r.expect_end();
  try {
    data.validate();
  } catch (const ValidationError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return data;
}

}  // namespace fcl
