#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "fcl/data.hpp"
#include "fcl/model.hpp"

namespace fcl {

enum class FinetuneMode { local, federated };

std::string_view to_string(FinetuneMode mode);
FinetuneMode parse_finetune_mode(std::string_view name);

/// Rows are true classes, columns are predictions.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t n_classes) : n_(n_classes), counts_(n_classes * n_classes, 0) {}

  void add(std::size_t truth, std::size_t predicted, std::size_t count = 1);
  void merge(const ConfusionMatrix& other);
  [[nodiscard]] std::size_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * n_ + predicted]; }
  [[nodiscard]] std::size_t n_classes() const noexcept { return n_; }
  [[nodiscard]] std::size_t total() const noexcept;
  [[nodiscard]] std::size_t true_count(std::size_t cls) const;
  [[nodiscard]] std::size_t predicted_count(std::size_t cls) const;

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> counts_;
};

/// Per-class recall and precision; the means run over classes present in the test data.
/// A class with no predictions has precision 0 and still counts in the mean.
struct Metrics {
  std::vector<double> per_class_recall;
  std::vector<double> per_class_precision;
  double mean_recall = 0.0;
  double mean_precision = 0.0;
  std::vector<bool> classes_present;
  ConfusionMatrix confusion;
};

Metrics metrics_from_confusion(const ConfusionMatrix& cm);

/// Argmax of the classifier logits; ties go to the lowest class index.
std::vector<std::size_t> predict(const ModelParams& model, const Tensor& batch);

Metrics evaluate(const ModelParams& model, const TestSplit& test);

/// local: unweighted mean over devices of device-level metrics.
/// federated: metrics of the pooled confusion matrix.
Metrics aggregate_metrics(std::span<const Metrics> per_device, FinetuneMode mode);

struct FinetuneConfig {
  FinetuneMode mode = FinetuneMode::federated;
  double label_fraction = 0.1;
  int epochs = 20;        // local mode
  int rounds = 100;       // federated mode
  int local_epochs = 1;   // federated mode, epochs per round
  std::size_t local_batch_size = 16;      // 0 = full batch
  std::size_t federated_batch_size = 16;  // 0 = full batch
  double lr = 0.003;
  double probe_lr = 0.03;  // replaces lr when only the head trains
  double decay_factor = 0.2;
  std::vector<int> decay_epochs{12, 16};  // local mode only
  bool linear_probe = false;              // freeze the encoder, train the head only

  [[nodiscard]] double base_lr() const noexcept { return linear_probe ? probe_lr : lr; }
  void validate() const;
};

struct FinetuneResult {
  ModelParams params;
  // Mean minibatch loss per local epoch, or per federated round (weighted by labeled counts).
  std::vector<double> losses;
};

/// Drops the projection head and attaches a seeded linear classifier to the encoder output.
ModelParams prepare_classifier(const ModelParams& pretrained, std::size_t n_classes, std::uint64_t seed);

/// Supervised Adam training of encoder + head on one device's labeled subset.
FinetuneResult finetune_local(const LabeledSubset& labeled, const ModelParams& pretrained, const FinetuneConfig& cfg,
                              std::uint64_t seed, int device_id = 0);

/// FedAvg over devices running local Adam epochs on their labeled subsets; each
/// device keeps its own Adam state between rounds. Devices without labels sit out.
FinetuneResult finetune_federated(std::span<const LabeledSubset> devices, const ModelParams& pretrained,
                                  const FinetuneConfig& cfg, std::uint64_t seed);

}  // namespace fcl
