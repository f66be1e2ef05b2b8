#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fcl/config.hpp"
#include "fcl/data.hpp"
#include "fcl/evaluation.hpp"
#include "fcl/federation.hpp"
#include "fcl/model.hpp"

namespace fcl {

inline constexpr std::string_view kToolVersion = "fcl 0.1.0";

struct DeviceSplit {
  TrainSplit train;
  TestSplit test;
};

/// generate -> partition, one dataset per device.
std::vector<Dataset> generate_device_data(const ExperimentConfig& cfg);
std::vector<DeviceSplit> split_devices(const ExperimentConfig& cfg, std::span<const Dataset> devices);

std::filesystem::path device_file(const std::filesystem::path& data_dir, std::size_t device);
/// Reads the device files written by cmd_gen_data and checks them against the config.
std::vector<Dataset> load_device_data(const ExperimentConfig& cfg, const std::filesystem::path& data_dir);

/// Output directory name of a method: random_init, local_cl, or fcl_<policy>.
std::string run_tag(Method method, NegativesPolicy policy);

PretrainConfig make_pretrain_config(const ExperimentConfig& cfg, Method method, NegativesPolicy policy,
                                    std::uint64_t seed);

/// random_init returns the seeded initialization with no records.
PretrainResult pretrain_method(const ExperimentConfig& cfg, std::span<const DeviceSplit> devices, Method method,
                               NegativesPolicy policy, std::uint64_t seed);

/// Fine-tunes and evaluates in one mode. Local mode starts device d from
/// per_device[d] when given, otherwise every device starts from `global`.
Metrics finetune_and_evaluate(const ExperimentConfig& cfg, std::span<const DeviceSplit> devices,
                              const ModelParams& global, std::span<const ModelParams> per_device,
                              double label_fraction, std::uint64_t seed, FinetuneMode mode);

struct MetricsRow {
  std::string method;
  std::string policy;  // "none" outside fcl
  double label_fraction = 0.0;
  std::uint64_t seed = 0;
  FinetuneMode mode = FinetuneMode::local;
  double mean_recall = 0.0;
  double mean_precision = 0.0;
  std::vector<double> recall;
  std::vector<double> precision;
};

MetricsRow make_row(Method method, NegativesPolicy policy, double label_fraction, std::uint64_t seed,
                    FinetuneMode mode, const Metrics& metrics);

/// Header: method,policy,L,seed,mode,mean_recall,mean_precision,recall_0..,precision_0..
std::string metrics_csv(std::span<const MetricsRow> rows);
/// Throws ValidationError naming the file when a column is missing or a value does not parse.
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

/// JSON record of a command run, written before any metrics file.
struct RunManifest {
  std::string command;
  std::string config_text;
  std::map<std::string, std::string> artifacts;  // relative path -> sha256
  std::map<std::string, double> wall_seconds;
  std::map<std::string, std::string> notes;

  [[nodiscard]] std::string to_json() const;
};

std::string sha256_file(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);

/// <out>/data: one FDS1 file per device plus manifest.json.
void cmd_gen_data(const ExperimentConfig& cfg);

/// <out>/pretrain/<tag>/seed_<s>/: checkpoint.fcl, round_log.csv, and for
/// local_cl one device_<d>.fcl per device.
void cmd_pretrain(const ExperimentConfig& cfg);

/// <out>/metrics/<tag>.csv. When `checkpoint` is given every seed starts from it;
/// otherwise each seed reads its pre-training output.
void cmd_finetune_eval(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& checkpoint);

struct AblationSummary {
  struct Row {
    std::string label;
    double mean_recall = 0.0;
    double mean_precision = 0.0;
  };
  std::vector<Row> policies;  // local_only, local_plus_remote, remote_only
  Row random_init;
  std::vector<MetricsRow> rows;
};

/// <out>/ablation/: metrics.csv, table.txt, manifest.json. All policies share
/// data, seeds and initialization; a random_init baseline is evaluated alongside.
AblationSummary cmd_ablate(const ExperimentConfig& cfg);

/// Mean ± std tables over seeds for every *.csv in `metrics_dir`.
std::string cmd_report(const std::filesystem::path& metrics_dir);

}  // namespace fcl
