#include "fcl/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fcl/error.hpp"
#include "fcl/kernels.hpp"
#include "fcl/rng.hpp"

namespace fcl {

namespace {

struct ChainEntry {
  const Layer* layer;
  std::string name;
  bool relu;
  enum class Group { encoder, projection, classifier } group;
  std::size_t index;
};

std::vector<ChainEntry> build_chain(const ModelParams& params, Mode mode) {
  std::vector<ChainEntry> chain;
  for (std::size_t i = 0; i < params.encoder.size(); ++i)
    chain.push_back({&params.encoder[i], "encoder[" + std::to_string(i) + "]", true, ChainEntry::Group::encoder, i});
  if (mode == Mode::project) {
    if (params.projection.empty()) throw ValidationError("forward: project mode requires projection layers");
    for (std::size_t i = 0; i < params.projection.size(); ++i)
      chain.push_back({&params.projection[i], "projection[" + std::to_string(i) + "]",
                       i + 1 < params.projection.size(), ChainEntry::Group::projection, i});
  } else if (mode == Mode::classify) {
    if (!params.classifier) throw ValidationError("forward: classify mode requires a classifier head");
    chain.push_back({&*params.classifier, "classifier", false, ChainEntry::Group::classifier, 0});
  }
  return chain;
}

Layer& grad_slot(ModelParams& grads, const ChainEntry& e) {
  switch (e.group) {
    case ChainEntry::Group::encoder:
      return grads.encoder[e.index];
    case ChainEntry::Group::projection:
      return grads.projection[e.index];
    case ChainEntry::Group::classifier:
      return *grads.classifier;
  }
  return *grads.classifier;  // unreachable
}

void check_layer(const Layer& layer, const std::string& name) {
  if (layer.weight.rank() != 2 || layer.bias.rank() != 1 || layer.bias.size() != layer.out()) {
    throw DimensionError(name + ": malformed layer, weight " + layer.weight.shape_string() + ", bias " +
                         layer.bias.shape_string());
  }
}

}  // namespace

std::size_t ModelParams::input_dim() const {
  if (!encoder.empty()) return encoder.front().in();
  if (!projection.empty()) return projection.front().in();
  return classifier ? classifier->in() : 0;
}

std::size_t ModelParams::embedding_dim() const { return encoder.empty() ? input_dim() : encoder.back().out(); }

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : tensors()) n += t->size();
  return n;
}

std::vector<Tensor*> ModelParams::tensors() {
  std::vector<Tensor*> out;
  for (auto& l : encoder) out.insert(out.end(), {&l.weight, &l.bias});
  for (auto& l : projection) out.insert(out.end(), {&l.weight, &l.bias});
  if (classifier) out.insert(out.end(), {&classifier->weight, &classifier->bias});
  return out;
}

std::vector<const Tensor*> ModelParams::tensors() const {
  std::vector<const Tensor*> out;
  for (const auto& l : encoder) out.insert(out.end(), {&l.weight, &l.bias});
  for (const auto& l : projection) out.insert(out.end(), {&l.weight, &l.bias});
  if (classifier) out.insert(out.end(), {&classifier->weight, &classifier->bias});
  return out;
}

void Architecture::validate() const {
  if (input_dim == 0) throw ValidationError("architecture: input_dim must be positive");
  for (auto w : encoder_widths)
    if (w == 0) throw ValidationError("architecture: encoder widths must be positive");
  if (projection_hidden == 0 || feature_dim == 0)
    throw ValidationError("architecture: projection dims must be positive");
}

Layer init_layer(std::size_t in, std::size_t out, std::uint64_t seed) {
  Rng rng(seed);
  Layer layer{Tensor::matrix(out, in), Tensor::vector(out)};
  const double limit = std::sqrt(6.0 / static_cast<double>(in));
  for (double& w : layer.weight.values()) w = rng.uniform(-limit, limit);
  const double bias_limit = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& b : layer.bias.values()) b = rng.uniform(-bias_limit, bias_limit);
  return layer;
}

ModelParams init_params(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  ModelParams params;
  std::size_t in = arch.input_dim;
  std::uint64_t k = 0;
  for (auto w : arch.encoder_widths) {
    params.encoder.push_back(init_layer(in, w, derive_seed(seed, Stream::init, {k++})));
    in = w;
  }
  params.projection.push_back(init_layer(in, arch.projection_hidden, derive_seed(seed, Stream::init, {k++})));
  params.projection.push_back(
      init_layer(arch.projection_hidden, arch.feature_dim, derive_seed(seed, Stream::init, {k++})));
  return params;
}

ModelParams zeros_like(const ModelParams& params) {
  ModelParams z = params;
  for (Tensor* t : z.tensors()) t->fill(0.0);
  return z;
}

bool same_architecture(const ModelParams& a, const ModelParams& b) {
  auto ta = a.tensors();
  auto tb = b.tensors();
  if (ta.size() != tb.size() || a.encoder.size() != b.encoder.size() ||
      a.projection.size() != b.projection.size() || a.classifier.has_value() != b.classifier.has_value())
    return false;
  for (std::size_t i = 0; i < ta.size(); ++i)
    if (!ta[i]->same_shape(*tb[i])) return false;
  return true;
}

void require_same_architecture(const ModelParams& a, const ModelParams& b, const std::string& context) {
  if (!same_architecture(a, b)) throw ValidationError(context + ": architecture mismatch");
}

void validate_params(const ModelParams& params) {
  std::size_t prev = 0;
  auto walk = [&](const Layer& l, const std::string& name, bool chain) {
    check_layer(l, name);
    if (chain && prev != 0 && l.in() != prev)
      throw DimensionError(name + ": input width " + std::to_string(l.in()) + " does not chain with " +
                           std::to_string(prev));
    prev = l.out();
  };
  for (std::size_t i = 0; i < params.encoder.size(); ++i) walk(params.encoder[i], "encoder[" + std::to_string(i) + "]", true);
  const std::size_t embedding = prev;
  for (std::size_t i = 0; i < params.projection.size(); ++i)
    walk(params.projection[i], "projection[" + std::to_string(i) + "]", true);
  prev = embedding;
  if (params.classifier) walk(*params.classifier, "classifier", true);
}

ForwardResult forward(const ModelParams& params, const Tensor& batch, Mode mode) {
  if (batch.rank() != 2) throw DimensionError("forward: batch must be a matrix, got " + batch.shape_string());
  auto chain = build_chain(params, mode);
  ForwardResult result;
  Stash& stash = result.stash;
  stash.mode = mode;
  stash.input = batch;

  const std::size_t rows = batch.rows();
  Tensor current = batch;
  for (const auto& e : chain) {
    const Layer& l = *e.layer;
    check_layer(l, e.name);
    if (current.cols() != l.in()) {
      throw DimensionError(e.name + ": expected input width " + std::to_string(l.in()) + ", got " +
                           std::to_string(current.cols()));
    }
    Tensor pre = Tensor::matrix(rows, l.out());
    kernels::parallel::affine_forward(current.values(), l.weight.values(), l.bias.values(), rows, l.in(), l.out(),
                                      pre.values());
    stash.inputs.push_back(std::move(current));
    current = pre;
    if (e.relu) {
      for (double& v : current.values()) v = v > 0.0 ? v : 0.0;
    }
    stash.pre_activation.push_back(std::move(pre));
    stash.relu.push_back(e.relu);
  }

  if (mode == Mode::project) {
    stash.unnormalized = current;
    stash.row_norms.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (double v : current.row(r)) s += v * v;
      const double n = std::sqrt(s);
      if (n == 0.0) throw ValidationError("forward: projection produced an all-zero row " + std::to_string(r));
      stash.row_norms[r] = n;
      for (double& v : current.row(r)) v /= n;
    }
  }
  result.output = std::move(current);
  return result;
}

Tensor infer(const ModelParams& params, const Tensor& batch, Mode mode) {
  return forward(params, batch, mode).output;
}

ModelParams backward(const ModelParams& params, const Stash& stash, const Tensor& output_grad) {
  auto chain = build_chain(params, stash.mode);
  if (chain.size() != stash.pre_activation.size())
    throw DimensionError("backward: stale stash, layer count " + std::to_string(stash.pre_activation.size()) +
                         " vs " + std::to_string(chain.size()));
  const std::size_t rows = stash.input.rows();
  const std::size_t out_cols = chain.empty() ? stash.input.cols() : chain.back().layer->out();
  if (output_grad.rank() != 2 || output_grad.rows() != rows || output_grad.cols() != out_cols)
    throw DimensionError("backward: output gradient " + output_grad.shape_string() + " does not match output [" +
                         std::to_string(rows) + "x" + std::to_string(out_cols) + "]");
  for (std::size_t k = 0; k < chain.size(); ++k) {
    const Layer& l = *chain[k].layer;
    if (stash.inputs[k].cols() != l.in() || stash.pre_activation[k].cols() != l.out() ||
        stash.pre_activation[k].rows() != rows)
      throw DimensionError("backward: stale stash at " + chain[k].name);
  }

  ModelParams grads = zeros_like(params);
  Tensor g = output_grad;

  if (stash.mode == Mode::project) {
    // y = u / |u|  =>  du = (dy - y (y . dy)) / |u|
    const Tensor& u = stash.unnormalized;
    for (std::size_t r = 0; r < rows; ++r) {
      const double n = stash.row_norms[r];
      auto ur = u.row(r);
      auto gr = g.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < gr.size(); ++c) dot += (ur[c] / n) * gr[c];
      for (std::size_t c = 0; c < gr.size(); ++c) gr[c] = (gr[c] - (ur[c] / n) * dot) / n;
    }
  }

  for (std::size_t k = chain.size(); k-- > 0;) {
    const ChainEntry& e = chain[k];
    const Layer& l = *e.layer;
    if (stash.relu[k]) {
      const auto pre = stash.pre_activation[k].values();
      auto gv = g.values();
      for (std::size_t i = 0; i < gv.size(); ++i)
        if (!(pre[i] > 0.0)) gv[i] = 0.0;
    }
    Layer& slot = grad_slot(grads, e);
    kernels::parallel::affine_backward_params(g.values(), stash.inputs[k].values(), rows, l.in(), l.out(),
                                              slot.weight.values(), slot.bias.values());
    if (k > 0) {
      Tensor dx = Tensor::matrix(rows, l.in());
      kernels::parallel::affine_backward_input(g.values(), l.weight.values(), rows, l.in(), l.out(), dx.values());
      g = std::move(dx);
    }
  }
  return grads;
}

Tensor l2_normalize(const Tensor& v) {
  if (v.rank() != 2 && v.rank() != 1) throw DimensionError("l2_normalize: expected a matrix");
  Tensor out = v;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    double s = 0.0;
    for (double x : row) s += x * x;
    if (s == 0.0) throw ValidationError("l2_normalize: row " + std::to_string(r) + " is all zeros");
    const double n = std::sqrt(s);
    for (double& x : row) x /= n;
  }
  return out;
}

CrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  const std::size_t rows = logits.rows();
  const std::size_t cols = logits.cols();
  if (targets.size() != rows)
    throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(rows) + " rows");
  if (rows == 0) throw ValidationError("softmax_cross_entropy: empty batch");
  CrossEntropy ce{0.0, Tensor::matrix(rows, cols)};
  const double inv = 1.0 / static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= cols) throw ValidationError("softmax_cross_entropy: target out of range");
    auto z = logits.row(r);
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    const double lse = m + std::log(s);
    ce.loss += (lse - z[targets[r]]) * inv;
    auto gr = ce.grad.row(r);
    for (std::size_t c = 0; c < cols; ++c) gr[c] = std::exp(z[c] - lse) * inv;
    gr[targets[r]] -= inv;
  }
  return ce;
}

KinkInfo kink_info(const Stash& stash) {
  KinkInfo info{0x12345678ULL, std::numeric_limits<double>::infinity()};
  for (std::size_t k = 0; k < stash.pre_activation.size(); ++k) {
    if (!stash.relu[k]) continue;
    std::uint64_t word = 0;
    std::size_t bits = 0;
    for (double v : stash.pre_activation[k].values()) {
      info.margin = std::min(info.margin, std::abs(v));
      word = (word << 1) | (v > 0.0 ? 1U : 0U);
      if (++bits == 64) {
        info.pattern = mix64(info.pattern ^ word);
        word = 0;
        bits = 0;
      }
    }
    info.pattern = mix64(info.pattern ^ word ^ (bits << 56));
  }
  return info;
}

}  // namespace fcl
