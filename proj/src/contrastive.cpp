#include "fcl/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fcl/error.hpp"
#include "fcl/kernels.hpp"

namespace fcl {

MemoryBank::MemoryBank(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ValidationError("memory bank: capacity must be positive");
}

void MemoryBank::push(std::span<const FeatureVec> feats) {
  for (const auto& f : feats) {
    if (!entries_.empty() && f.values.size() != entries_.front().values.size())
      throw DimensionError("memory bank: feature dim " + std::to_string(f.values.size()) + " vs bank dim " +
                           std::to_string(entries_.front().values.size()));
    entries_.push_back(f);
    if (entries_.size() > capacity_) entries_.pop_front();
  }
}

void MemoryBank::push(const FeatureVec& feat) { push(std::span<const FeatureVec>(&feat, 1)); }

Tensor MemoryBank::as_matrix(std::size_t dim) const {
  Tensor m = Tensor::matrix(entries_.size(), dim);
  for (std::size_t r = 0; r < entries_.size(); ++r) {
    const auto& v = entries_[r].values;
    if (v.size() != dim) throw DimensionError("memory bank: entry dim does not match " + std::to_string(dim));
    std::copy(v.begin(), v.end(), m.row(r).begin());
  }
  return m;
}

std::size_t MemoryBank::count_origin(int origin) const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [origin](const FeatureVec& f) { return f.origin == origin; }));
}

void bank_push(MemoryBank& bank, std::span<const FeatureVec> feats) { bank.push(feats); }

std::vector<FeatureVec> bank_sample_uniform(const MemoryBank& bank, std::size_t count, Rng& rng) {
  if (bank.empty()) throw ValidationError("bank_sample_uniform: bank is empty");
  std::vector<FeatureVec> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(bank[rng.index(bank.size())]);
  return out;
}

void ContrastiveConfig::validate() const {
  if (!(tau > 0.0)) throw ValidationError("contrastive: tau must be positive");
  if (feature_dim == 0 || batch_size == 0 || bank_capacity == 0)
    throw ValidationError("contrastive: feature_dim, batch_size and bank_capacity must be positive");
  if (!(ema_momentum >= 0.0 && ema_momentum < 1.0)) throw ValidationError("contrastive: ema_momentum must be in [0, 1)");
}

AugmentationSpec AugmentationSpec::identity() {
  AugmentationSpec s;
  s.crop = false;
  s.flip_probability = 0.0;
  s.rotations = {0};
  s.brightness = 0.0;
  s.contrast = 0.0;
  s.noise_sigma = 0.0;
  s.mask_probability = 0.0;
  s.scale_jitter = 0.0;
  s.clamp = false;
  return s;
}

void AugmentationSpec::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(flip_probability) || !prob(mask_probability))
    throw ValidationError("augmentation: probabilities must lie in [0, 1]");
  if (crop && !(crop_scale_min > 0.0 && crop_scale_min <= crop_scale_max && crop_scale_max <= 1.0))
    throw ValidationError("augmentation: crop scale range must satisfy 0 < min <= max <= 1");
  if (rotations.empty()) throw ValidationError("augmentation: rotation set must not be empty");
  for (int r : rotations)
    if (r != 0 && r != 90 && r != 180 && r != 270) throw ValidationError("augmentation: rotation must be 0/90/180/270");
  if (brightness < 0.0 || contrast < 0.0 || contrast >= 1.0 || noise_sigma < 0.0 || scale_jitter < 0.0 ||
      scale_jitter >= 1.0)
    throw ValidationError("augmentation: jitter ranges must be non-negative (contrast, scale below 1)");
}

namespace {

std::vector<double> crop_resize(const std::vector<double>& x, const SampleShape& s, double scale, Rng& rng) {
  const double side = std::sqrt(scale);
  const auto ch = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(side * static_cast<double>(s.height))));
  const auto cw = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(side * static_cast<double>(s.width))));
  const std::size_t y0 = rng.index(s.height - std::min(ch, s.height) + 1);
  const std::size_t x0 = rng.index(s.width - std::min(cw, s.width) + 1);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < s.height; ++i) {
    const std::size_t si = y0 + i * ch / s.height;
    for (std::size_t j = 0; j < s.width; ++j) {
      const std::size_t sj = x0 + j * cw / s.width;
      for (std::size_t c = 0; c < s.channels; ++c)
        out[(i * s.width + j) * s.channels + c] = x[(si * s.width + sj) * s.channels + c];
    }
  }
  return out;
}

std::vector<double> flip_horizontal(const std::vector<double>& x, const SampleShape& s) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < s.height; ++i)
    for (std::size_t j = 0; j < s.width; ++j)
      for (std::size_t c = 0; c < s.channels; ++c)
        out[(i * s.width + j) * s.channels + c] = x[(i * s.width + (s.width - 1 - j)) * s.channels + c];
  return out;
}

// Quarter turns counter-clockwise on a square grid.
std::vector<double> rotate(const std::vector<double>& x, const SampleShape& s, int degrees) {
  std::vector<double> out = x;
  const std::size_t n = s.height;
  for (int turn = 0; turn < degrees / 90; ++turn) {
    std::vector<double> next(out.size());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t c = 0; c < s.channels; ++c)
          next[((n - 1 - j) * n + i) * s.channels + c] = out[(i * n + j) * s.channels + c];
    out = std::move(next);
  }
  return out;
}

}  // namespace

std::vector<double> augment(std::span<const double> x, const SampleShape& shape, const AugmentationSpec& spec, Rng& rng) {
  if (x.size() != shape.size())
    throw DimensionError("augment: sample has " + std::to_string(x.size()) + " values, shape wants " +
                         std::to_string(shape.size()));
  std::vector<double> v(x.begin(), x.end());
  const bool grid = shape.height > 1 && shape.width > 1;

  if (grid && spec.crop) v = crop_resize(v, shape, rng.uniform(spec.crop_scale_min, spec.crop_scale_max), rng);
  if (grid && spec.flip_probability > 0.0 && rng.bernoulli(spec.flip_probability)) v = flip_horizontal(v, shape);
  if (grid && (spec.rotations.size() > 1 || spec.rotations.front() != 0)) {
    const int deg = spec.rotations[rng.index(spec.rotations.size())];
    if (deg != 0) {
      if (shape.height != shape.width) throw ValidationError("augment: rotation requires a square grid");
      v = rotate(v, shape, deg);
    }
  }
  if (spec.brightness > 0.0) {
    const double shift = rng.uniform(-spec.brightness, spec.brightness);
    for (double& e : v) e += shift;
  }
  if (spec.contrast > 0.0) {
    const double factor = rng.uniform(1.0 - spec.contrast, 1.0 + spec.contrast);
    double mean = 0.0;
    for (double e : v) mean += e;
    mean /= static_cast<double>(v.size());
    for (double& e : v) e = mean + (e - mean) * factor;
  }
  if (spec.scale_jitter > 0.0) {
    const double factor = rng.uniform(1.0 - spec.scale_jitter, 1.0 + spec.scale_jitter);
    for (double& e : v) e *= factor;
  }
  if (spec.mask_probability > 0.0) {
    for (double& e : v)
      if (rng.bernoulli(spec.mask_probability)) e = 0.0;
  }
  if (spec.noise_sigma > 0.0) {
    for (double& e : v) e += rng.normal(0.0, spec.noise_sigma);
  }
  if (spec.clamp) {
    for (double& e : v) e = std::clamp(e, 0.0, 1.0);
  }
  return v;
}

std::pair<std::vector<double>, std::vector<double>> augment_pair(std::span<const double> x, const SampleShape& shape,
                                                                 const AugmentationSpec& spec, Rng& rng) {
  auto xq = augment(x, shape, spec, rng);
  auto xk = augment(x, shape, spec, rng);
  return {std::move(xq), std::move(xk)};
}

void momentum_update(const ModelParams& main, ModelParams& momentum_model, double m) {
  require_same_architecture(main, momentum_model, "momentum_update");
  auto src = main.tensors();
  auto dst = momentum_model.tensors();
  for (std::size_t t = 0; t < src.size(); ++t) {
    auto s = src[t]->values();
    auto d = dst[t]->values();
    for (std::size_t i = 0; i < s.size(); ++i) d[i] = m * d[i] + (1.0 - m) * s[i];
  }
}

BatchInfoNce info_nce_batch(const Tensor& queries, const Tensor& keys, const Tensor& negatives, double tau) {
  if (!(tau > 0.0)) throw ValidationError("info_nce: tau must be positive");
  const std::size_t batch = queries.rows();
  const std::size_t dim = queries.cols();
  if (dim == 0) throw ValidationError("info_nce: empty feature dimension");
  if (keys.rows() != batch || keys.cols() != dim) throw DimensionError("info_nce: keys do not match queries");
  const std::size_t n_neg = negatives.size() == 0 ? 0 : negatives.rows();
  if (n_neg > 0 && negatives.cols() != dim) throw DimensionError("info_nce: negatives do not match feature dim");

  BatchInfoNce out;
  out.per_sample_loss.assign(batch, 0.0);
  out.grad_queries = Tensor::matrix(batch, dim);
  out.grad_keys = Tensor::matrix(batch, dim);
  if (batch == 0) return out;

  Tensor neg_logits = Tensor::matrix(batch, n_neg);
  if (n_neg > 0)
    kernels::parallel::matmul_transposed(queries.values(), negatives.values(), batch, n_neg, dim, neg_logits.values());

  const double inv_tau = 1.0 / tau;
  const double inv_batch = 1.0 / static_cast<double>(batch);
  Tensor weights = Tensor::matrix(batch, n_neg);  // softmax mass on each negative, scaled for the gradient
  for (std::size_t b = 0; b < batch; ++b) {
    auto q = queries.row(b);
    auto k = keys.row(b);
    double pos = 0.0;
    for (std::size_t c = 0; c < dim; ++c) pos += q[c] * k[c];
    pos *= inv_tau;
    auto neg = neg_logits.row(b);
    double m = pos;
    for (double& z : neg) {
      z *= inv_tau;
      m = std::max(m, z);
    }
    double s = std::exp(pos - m);
    for (double z : neg) s += std::exp(z - m);
    const double lse = m + std::log(s);
    const double loss = n_neg == 0 ? 0.0 : lse - pos;
    out.per_sample_loss[b] = loss;
    out.loss += loss * inv_batch;

    const double p_pos = n_neg == 0 ? 1.0 : std::exp(pos - lse);
    const double scale = inv_tau * inv_batch;
    auto gq = out.grad_queries.row(b);
    auto gk = out.grad_keys.row(b);
    for (std::size_t c = 0; c < dim; ++c) {
      gq[c] = (p_pos - 1.0) * k[c] * scale;
      gk[c] = (p_pos - 1.0) * q[c] * scale;
    }
    auto w = weights.row(b);
    for (std::size_t j = 0; j < n_neg; ++j) w[j] = std::exp(neg[j] - lse) * scale;
  }

  if (n_neg > 0) {
    // grad_q += W N, computed as W (N^T)^T.
    Tensor neg_t = Tensor::matrix(dim, n_neg);
    for (std::size_t j = 0; j < n_neg; ++j)
      for (std::size_t c = 0; c < dim; ++c) neg_t(c, j) = negatives(j, c);
    Tensor contrib = Tensor::matrix(batch, dim);
    kernels::parallel::matmul_transposed(weights.values(), neg_t.values(), batch, dim, n_neg, contrib.values());
    auto gq = out.grad_queries.values();
    auto cv = contrib.values();
    for (std::size_t i = 0; i < gq.size(); ++i) gq[i] += cv[i];
  }
  return out;
}

InfoNceResult info_nce(std::span<const double> q, std::span<const double> k_pos, std::span<const FeatureVec> negatives,
                       double tau) {
  const std::size_t dim = q.size();
  if (dim == 0) throw ValidationError("info_nce: empty feature dimension");
  if (k_pos.size() != dim) throw DimensionError("info_nce: positive key dim does not match query");
  Tensor qt({1, dim}, std::vector<double>(q.begin(), q.end()));
  Tensor kt({1, dim}, std::vector<double>(k_pos.begin(), k_pos.end()));
  Tensor nt = Tensor::matrix(negatives.size(), dim);
  for (std::size_t j = 0; j < negatives.size(); ++j) {
    if (negatives[j].values.size() != dim) throw DimensionError("info_nce: negative dim does not match query");
    std::copy(negatives[j].values.begin(), negatives[j].values.end(), nt.row(j).begin());
  }
  auto batch = info_nce_batch(qt, kt, nt, tau);
  InfoNceResult r;
  r.loss = batch.loss;
  r.grad_q.assign(batch.grad_queries.values().begin(), batch.grad_queries.values().end());
  r.grad_k.assign(batch.grad_keys.values().begin(), batch.grad_keys.values().end());
  return r;
}

InfoNceResult info_nce(const FeatureVec& q, const FeatureVec& k_pos, std::span<const FeatureVec> negatives, double tau) {
  return info_nce(std::span<const double>(q.values), std::span<const double>(k_pos.values), negatives, tau);
}

}  // namespace fcl
