#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <span>
#include <utility>
#include <vector>

#include "fcl/model.hpp"
#include "fcl/rng.hpp"
#include "fcl/sample.hpp"
#include "fcl/tensor.hpp"

namespace fcl {

/// Device id used for features whose origin has been stripped.
inline constexpr int kAnonymousOrigin = -1;

/// Unit-norm embedding. `origin` and `birth_round` are bookkeeping for the
/// server and the audit harness; they never enter the loss.
struct FeatureVec {
  std::vector<double> values;
  int origin = kAnonymousOrigin;
  int birth_round = 0;

  friend bool operator==(const FeatureVec&, const FeatureVec&) = default;
};

/// Fixed-capacity FIFO of features, oldest first.
class MemoryBank {
 public:
  MemoryBank() = default;
  explicit MemoryBank(std::size_t capacity);

  [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }
  [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
  [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }
  [[nodiscard]] const std::deque<FeatureVec>& entries() const noexcept { return entries_; }
  [[nodiscard]] const FeatureVec& operator[](std::size_t i) const { return entries_[i]; }

  /// Appends in order, then evicts from the front until size() <= capacity().
  void push(std::span<const FeatureVec> feats);
  void push(const FeatureVec& feat);

  /// Rows of the bank stacked into a [size x dim] matrix (empty bank -> [0 x dim]).
  [[nodiscard]] Tensor as_matrix(std::size_t dim) const;

  /// Number of entries carrying the given origin tag.
  [[nodiscard]] std::size_t count_origin(int origin) const;

 private:
  std::size_t capacity_ = 0;
  std::deque<FeatureVec> entries_;
};

void bank_push(MemoryBank& bank, std::span<const FeatureVec> feats);

/// `count` draws with replacement, uniform over the bank's indices.
std::vector<FeatureVec> bank_sample_uniform(const MemoryBank& bank, std::size_t count, Rng& rng);

struct ContrastiveConfig {
  double tau = 0.07;
  std::size_t feature_dim = 32;
  std::size_t batch_size = 16;
  std::size_t bank_capacity = 64;
  double ema_momentum = 0.99;

  void validate() const;
};

/// Random transform family T. Grid operations assume channel-last H x W x C
/// samples; the masking and scaling operations work on flat vectors as well.
struct AugmentationSpec {
  bool crop = true;
  double crop_scale_min = 0.6;  // fraction of the image area kept by the crop
  double crop_scale_max = 1.0;
  double flip_probability = 0.5;
  std::vector<int> rotations{0};  // degrees, subset of {0, 90, 180, 270}
  double brightness = 0.2;        // additive shift drawn from [-b, b]
  double contrast = 0.2;          // scale about the mean drawn from [1 - c, 1 + c]
  double noise_sigma = 0.05;
  double mask_probability = 0.0;  // per-element dropout to zero
  double scale_jitter = 0.0;      // global multiplicative jitter in [1 - s, 1 + s]
  bool clamp = true;

  /// Every operation switched off; augment() becomes the identity.
  static AugmentationSpec identity();
  void validate() const;
};

/// One draw t ~ T applied to x.
std::vector<double> augment(std::span<const double> x, const SampleShape& shape, const AugmentationSpec& spec, Rng& rng);

/// Two independent draws t, t' ~ T applied to the same x.
std::pair<std::vector<double>, std::vector<double>> augment_pair(std::span<const double> x, const SampleShape& shape,
                                                                 const AugmentationSpec& spec, Rng& rng);

/// Every parameter: p_momentum <- m * p_momentum + (1 - m) * p_main.
void momentum_update(const ModelParams& main, ModelParams& momentum_model, double m);

struct InfoNceResult {
  double loss = 0.0;
  std::vector<double> grad_q;
  std::vector<double> grad_k;
};

/// -log(exp(q.k/tau) / (exp(q.k/tau) + sum_n exp(q.n/tau))). Negatives are constants.
InfoNceResult info_nce(std::span<const double> q, std::span<const double> k_pos, std::span<const FeatureVec> negatives,
                       double tau);
InfoNceResult info_nce(const FeatureVec& q, const FeatureVec& k_pos, std::span<const FeatureVec> negatives, double tau);

/// Batched form used in training: row b of `queries` is contrasted with row b of
/// `keys` and with every row of `negatives` ([n x d], n may be 0). The loss is
/// the batch mean; grad_queries/grad_keys are gradients of that mean.
struct BatchInfoNce {
  double loss = 0.0;
  std::vector<double> per_sample_loss;
  Tensor grad_queries;
  Tensor grad_keys;
};
BatchInfoNce info_nce_batch(const Tensor& queries, const Tensor& keys, const Tensor& negatives, double tau);

}  // namespace fcl
