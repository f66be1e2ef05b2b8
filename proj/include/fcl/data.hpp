#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "fcl/sample.hpp"
#include "fcl/tensor.hpp"

namespace fcl {

/// Labeled samples with values in [0, 1], stored as f32 exactly as on disk.
struct Dataset {
  SampleShape shape;
  std::uint32_t n_classes = 0;
  std::vector<float> samples;  // size() * shape.size() values, sample-major
  std::vector<std::uint16_t> labels;

  [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
  [[nodiscard]] bool empty() const noexcept { return labels.empty(); }
  [[nodiscard]] std::span<const float> sample(std::size_t i) const {
    return {samples.data() + i * shape.size(), shape.size()};
  }
  /// Copy of the listed samples, in the listed order.
  [[nodiscard]] Dataset subset(std::span<const std::size_t> indices) const;
  [[nodiscard]] std::vector<std::size_t> class_counts() const;
  /// Throws ValidationError when an invariant (label range, value range, sizes) fails.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Stacks the listed samples into a [n x sample_size] matrix of doubles.
Tensor to_batch(const Dataset& data, std::span<const std::size_t> indices);
Tensor to_batch(const Dataset& data);
/// Labels as indices, for cross-entropy.
std::vector<std::size_t> label_indices(const Dataset& data);

// Strongly typed views so fine-tuning code cannot be handed test data.

struct TrainSplit {
  Dataset data;
  std::vector<std::size_t> source_indices;  // positions in the device dataset
};

struct TestSplit {
  Dataset data;
  std::vector<std::size_t> source_indices;
};

struct LabeledSubset {
  Dataset data;
  std::vector<std::size_t> source_indices;  // positions in the training split
};

/// One Gaussian bump of a class pattern, offset from the grid centre in pixels.
struct Blob {
  double dx = 0.0;
  double dy = 0.0;
  double radius = 1.0;
  double amplitude = 1.0;
};

struct ClassTemplate {
  std::vector<Blob> blobs;
};

struct SyntheticSpec {
  std::size_t n_classes = 5;
  std::size_t samples_per_class = 200;
  SampleShape shape{16, 16, 1};
  std::vector<ClassTemplate> templates;  // empty: default_templates(n_classes)
  // Master jitter scale; 0 makes every sample of a class identical.
  double jitter = 1.0;
  double shift_per_jitter = 2.0;       // std-dev of the pattern translation, pixels
  double blob_offset_per_jitter = 0.6; // std-dev of each blob's independent displacement
  double radius_per_jitter = 0.12;     // relative std-dev of blob radii
  double amplitude_per_jitter = 0.2;
  double background_per_jitter = 0.1;  // upper bound of the uniform background level
  double noise_per_jitter = 0.05;      // per-pixel Gaussian noise
  // Upper bound of a per-sample tone t: pixels become t + (1 - t) * v, lifting
  // the floor and compressing contrast.
  double tone_per_jitter = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Five hand-placed patterns (disc, horizontal pair, vertical pair, triangle,
/// ring); classes beyond five get seeded random blob layouts.
std::vector<ClassTemplate> default_templates(std::size_t n_classes);

/// Class-ordered dataset: samples_per_class consecutive samples per class.
Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

enum class SkewMode { dirichlet, dominant_class };

struct PartitionSpec {
  std::size_t n_devices = 10;
  SkewMode skew_mode = SkewMode::dominant_class;
  double skew_param = 0.7;  // Dirichlet alpha, or the dominant-class fraction
  std::uint64_t seed = 0;

  void validate() const;
};

/// Disjoint cover of [0, N) by n_devices nonempty index lists.
std::vector<std::vector<std::size_t>> partition_indices(const Dataset& data, const PartitionSpec& spec);
std::vector<Dataset> partition(const Dataset& data, const PartitionSpec& spec);

/// Label-stratified priority order: every prefix is as close to the class
/// proportions as a sequential (Sainte-Lague) apportionment allows. Prefixes of
/// one order are nested, which is what makes label subsets nested in L.
std::vector<std::size_t> stratified_order(const Dataset& data, std::uint64_t seed);

/// round(ratio * N) samples to train, the rest to test; N >= 2 keeps both sides nonempty.
std::pair<TrainSplit, TestSplit> split_train_test(const Dataset& device_data, double ratio, std::uint64_t seed);

/// ceil(fraction * N) stratified samples of the training split.
LabeledSubset label_subset(const TrainSplit& train, double fraction, std::uint64_t seed);

/// Binary format: "FDS1", u32 version, u32 N, u32 H, u32 W, u32 C, u32 n_classes,
/// N*H*W*C little-endian f32 values, N little-endian u16 labels.
void save_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace fcl
