#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fcl/contrastive.hpp"
#include "fcl/data.hpp"
#include "fcl/evaluation.hpp"
#include "fcl/federation.hpp"
#include "fcl/model.hpp"

namespace fcl {

/// Pre-training method compared in the experiments.
enum class Method {
  random_init,  // no pre-training
  local_cl,     // contrastive learning on each device alone, no aggregation or sharing
  fcl,          // federated contrastive learning with the configured negatives policy
};

std::string_view to_string(Method method);
Method parse_method(std::string_view name);

struct ExperimentConfig {
  SyntheticSpec synthetic;
  PartitionSpec partition;
  double train_ratio = 0.6;
  Architecture arch;  // input_dim follows the synthetic sample shape
  ContrastiveConfig contrastive;
  AugmentationSpec augmentation;
  FederationConfig federation;  // n_devices follows partition.n_devices
  FinetuneConfig finetune;
  std::vector<FinetuneMode> finetune_modes{FinetuneMode::local, FinetuneMode::federated};
  Method method = Method::fcl;
  NegativesPolicy policy = NegativesPolicy::remote_only;
  std::vector<double> label_fractions{0.1, 0.2, 0.4, 0.8};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::filesystem::path output_dir = "runs";
  double ablation_label_fraction = 0.1;
  FinetuneMode ablation_mode = FinetuneMode::federated;
  bool ablation_linear_probe = true;  // head-only fine-tuning isolates what pre-training learned

  /// Copies the shared fields (input dim, device count, feature dim) into place and checks every section.
  void resolve();
};

/// Parses the flat key=value format: one `section.key = value` per line, `#`
/// comments, comma-separated lists. Unknown keys and malformed values throw
/// ValidationError naming the line.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every key with its resolved value; parse_config(to_config_text(c)) reproduces c.
std::string to_config_text(const ExperimentConfig& cfg);

}  // namespace fcl
