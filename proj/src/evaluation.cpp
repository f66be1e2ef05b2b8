#include "fcl/evaluation.hpp"

#include <algorithm>
#include <exception>
#include <numeric>
#include <string>

#include "fcl/error.hpp"
#include "fcl/federation.hpp"
#include "fcl/optim.hpp"
#include "fcl/rng.hpp"

namespace fcl {

std::string_view to_string(FinetuneMode mode) { return mode == FinetuneMode::local ? "local" : "federated"; }

FinetuneMode parse_finetune_mode(std::string_view name) {
  if (name == "local") return FinetuneMode::local;
  if (name == "federated") return FinetuneMode::federated;
  throw ValidationError("unknown fine-tuning mode '" + std::string(name) + "' (expected local or federated)");
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted, std::size_t count) {
  if (truth >= n_ || predicted >= n_) throw ValidationError("confusion matrix: class index out of range");
  counts_[truth * n_ + predicted] += count;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.n_ != n_) throw ValidationError("confusion matrix: class counts differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::size_t ConfusionMatrix::total() const noexcept {
  return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0});
}

std::size_t ConfusionMatrix::true_count(std::size_t cls) const {
  std::size_t s = 0;
  for (std::size_t p = 0; p < n_; ++p) s += at(cls, p);
  return s;
}

std::size_t ConfusionMatrix::predicted_count(std::size_t cls) const {
  std::size_t s = 0;
  for (std::size_t t = 0; t < n_; ++t) s += at(t, cls);
  return s;
}

Metrics metrics_from_confusion(const ConfusionMatrix& cm) {
  const std::size_t n = cm.n_classes();
  Metrics m;
  m.confusion = cm;
  m.per_class_recall.assign(n, 0.0);
  m.per_class_precision.assign(n, 0.0);
  m.classes_present.assign(n, false);
  std::size_t present = 0;
  for (std::size_t c = 0; c < n; ++c) {
    const auto tp = static_cast<double>(cm.at(c, c));
    const std::size_t truth = cm.true_count(c);
    const std::size_t predicted = cm.predicted_count(c);
    if (truth > 0) m.per_class_recall[c] = tp / static_cast<double>(truth);
    if (predicted > 0) m.per_class_precision[c] = tp / static_cast<double>(predicted);
    if (truth > 0) {
      m.classes_present[c] = true;
      m.mean_recall += m.per_class_recall[c];
      m.mean_precision += m.per_class_precision[c];
      ++present;
    }
  }
  if (present == 0) throw ValidationError("metrics: no samples evaluated");
  m.mean_recall /= static_cast<double>(present);
  m.mean_precision /= static_cast<double>(present);
  return m;
}

std::vector<std::size_t> predict(const ModelParams& model, const Tensor& batch) {
  const Tensor logits = infer(model, batch, Mode::classify);
  std::vector<std::size_t> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

Metrics evaluate(const ModelParams& model, const TestSplit& test) {
  if (test.data.empty()) throw ValidationError("evaluate: test set is empty");
  if (!model.classifier) throw ValidationError("evaluate: model has no classifier head");
  const auto predictions = predict(model, to_batch(test.data));
  ConfusionMatrix cm(test.data.n_classes);
  for (std::size_t i = 0; i < predictions.size(); ++i) cm.add(test.data.labels[i], predictions[i]);
  return metrics_from_confusion(cm);
}

Metrics aggregate_metrics(std::span<const Metrics> per_device, FinetuneMode mode) {
  if (per_device.empty()) throw ValidationError("aggregate_metrics: no devices");
  ConfusionMatrix pooled(per_device.front().confusion.n_classes());
  for (const auto& m : per_device) pooled.merge(m.confusion);
  if (mode == FinetuneMode::federated) return metrics_from_confusion(pooled);

  const std::size_t n = pooled.n_classes();
  Metrics out;
  out.confusion = pooled;
  out.per_class_recall.assign(n, 0.0);
  out.per_class_precision.assign(n, 0.0);
  out.classes_present.assign(n, false);
  std::vector<std::size_t> seen(n, 0);
  for (const auto& m : per_device) {
    out.mean_recall += m.mean_recall;
    out.mean_precision += m.mean_precision;
    for (std::size_t c = 0; c < n; ++c) {
      if (!m.classes_present[c]) continue;
      out.classes_present[c] = true;
      out.per_class_recall[c] += m.per_class_recall[c];
      out.per_class_precision[c] += m.per_class_precision[c];
      ++seen[c];
    }
  }
  out.mean_recall /= static_cast<double>(per_device.size());
  out.mean_precision /= static_cast<double>(per_device.size());
  for (std::size_t c = 0; c < n; ++c) {
    if (seen[c] == 0) continue;
    out.per_class_recall[c] /= static_cast<double>(seen[c]);
    out.per_class_precision[c] /= static_cast<double>(seen[c]);
  }
  return out;
}

void FinetuneConfig::validate() const {
  if (!(label_fraction > 0.0 && label_fraction <= 1.0))
    throw ValidationError("finetune: label_fraction must be in (0, 1]");
  if (epochs < 0 || rounds < 0 || local_epochs < 1) throw ValidationError("finetune: negative epoch or round count");
  if (!(lr >= 0.0) || !(probe_lr >= 0.0) || !(decay_factor > 0.0))
    throw ValidationError("finetune: learning rates must be >= 0, decay factor > 0");
}

ModelParams prepare_classifier(const ModelParams& pretrained, std::size_t n_classes, std::uint64_t seed) {
  if (n_classes < 2) throw ValidationError("prepare_classifier: need at least two classes");
  ModelParams model;
  model.encoder = pretrained.encoder;
  model.classifier = init_layer(pretrained.embedding_dim(), n_classes, derive_seed(seed, Stream::head));
  return model;
}

namespace {

// One pass over the labeled data; returns the mean minibatch loss.
double supervised_epoch(ModelParams& model, OptimizerState& opt, const Dataset& data, std::size_t batch_size,
                        double lr, bool linear_probe, Rng& rng) {
  const std::size_t n = data.size();
  const std::size_t bs = batch_size == 0 ? n : std::min(batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());
  double loss_sum = 0.0;
  std::size_t steps = 0;
  for (std::size_t start = 0; start < n; start += bs) {
    const std::size_t b = std::min(bs, n - start);
    std::span<const std::size_t> idx(order.data() + start, b);
    std::vector<std::size_t> targets;
    targets.reserve(b);
    for (auto i : idx) targets.push_back(data.labels[i]);
    auto fwd = forward(model, to_batch(data, idx), Mode::classify);
    const auto ce = softmax_cross_entropy(fwd.output, targets);
    auto grads = backward(model, fwd.stash, ce.grad);
    if (linear_probe)
      for (auto& l : grads.encoder) {
        l.weight.fill(0.0);
        l.bias.fill(0.0);
      }
    adam_step(model, grads, opt, lr);
    loss_sum += ce.loss;
    ++steps;
  }
  return loss_sum / static_cast<double>(steps);
}

}  // namespace

FinetuneResult finetune_local(const LabeledSubset& labeled, const ModelParams& pretrained, const FinetuneConfig& cfg,
                              std::uint64_t seed, int device_id) {
  cfg.validate();
  if (labeled.data.empty())
    throw ValidationError("finetune_local: device " + std::to_string(device_id) + " has no labeled samples");
  FinetuneResult result;
  result.params = prepare_classifier(pretrained, labeled.data.n_classes, seed);
  OptimizerState opt = make_adam(result.params);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(seed, Stream::finetune,
                        {static_cast<std::uint64_t>(device_id), static_cast<std::uint64_t>(epoch)}));
    const double lr = step_decay_lr(epoch, cfg.base_lr(), cfg.decay_factor, cfg.decay_epochs);
    result.losses.push_back(
        supervised_epoch(result.params, opt, labeled.data, cfg.local_batch_size, lr, cfg.linear_probe, rng));
  }
  return result;
}

FinetuneResult finetune_federated(std::span<const LabeledSubset> devices, const ModelParams& pretrained,
                                  const FinetuneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::vector<std::size_t> participants;
  for (std::size_t d = 0; d < devices.size(); ++d)
    if (!devices[d].data.empty()) participants.push_back(d);
  if (participants.empty()) throw ValidationError("finetune_federated: no device has labeled samples");

  FinetuneResult result;
  result.params = prepare_classifier(pretrained, devices[participants.front()].data.n_classes, seed);
  std::vector<OptimizerState> optimizers(participants.size(), make_adam(result.params));
  std::vector<std::size_t> sizes;
  for (auto d : participants) sizes.push_back(devices[d].data.size());
  const auto weights = fedavg_weights(sizes);

  for (int round = 0; round < cfg.rounds; ++round) {
    std::vector<ClientUpdate> updates(participants.size());
    std::vector<double> losses(participants.size(), 0.0);
    std::vector<std::exception_ptr> errors(participants.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t k = 0; k < static_cast<std::int64_t>(participants.size()); ++k) {
      try {
        const std::size_t d = participants[k];
        ModelParams local = result.params;
        for (int e = 0; e < cfg.local_epochs; ++e) {
          const auto epoch_index = static_cast<std::uint64_t>(round) * static_cast<std::uint64_t>(cfg.local_epochs) +
                                   static_cast<std::uint64_t>(e);
          Rng rng(derive_seed(seed, Stream::finetune, {static_cast<std::uint64_t>(d), epoch_index}));
          losses[k] += supervised_epoch(local, optimizers[k], devices[d].data, cfg.federated_batch_size, cfg.base_lr(),
                                        cfg.linear_probe, rng) /
                       static_cast<double>(cfg.local_epochs);
        }
        updates[k] = {std::move(local), sizes[k]};
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    result.params = fedavg(updates);
    double round_loss = 0.0;
    for (std::size_t k = 0; k < losses.size(); ++k) round_loss += weights[k] * losses[k];
    result.losses.push_back(round_loss);
  }
  return result;
}

}  // namespace fcl
