#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fcl/contrastive.hpp"
#include "fcl/data.hpp"
#include "fcl/model.hpp"
#include "fcl/optim.hpp"
#include "fcl/rng.hpp"

namespace fcl {

/// Which features fill Q_CL during local contrastive learning.
enum class NegativesPolicy {
  local_only,         // no feature exchange
  local_plus_remote,  // Q_CL starts from the local bank; local and sampled remote features are pushed
  remote_only,        // Q_CL starts from the remote bank; only sampled remote features are pushed
};

std::string_view to_string(NegativesPolicy policy);
NegativesPolicy parse_policy(std::string_view name);
[[nodiscard]] constexpr bool uses_remote(NegativesPolicy p) noexcept { return p != NegativesPolicy::local_only; }

/// When devices compute and upload the features shared in a round.
enum class UploadTiming {
  round_start,  // after receiving the global model, before local training; used by the same round
  round_end,    // after local training; used by the next round
};

std::string_view to_string(UploadTiming timing);
UploadTiming parse_upload_timing(std::string_view name);

struct FederationConfig {
  std::size_t n_devices = 10;
  int rounds = 30;
  double active_ratio = 1.0;
  int local_epochs = 1;
  NegativesPolicy policy = NegativesPolicy::remote_only;
  std::size_t share_count = 64;  // features each device uploads per round
  std::uint64_t global_seed = 0;
  double lr0 = 0.03;
  double sgd_momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t qcl_capacity = 0;  // 0: (|C| - 1) * share_count for remote_only, K otherwise
  bool aggregate = true;         // false: devices train independently, nothing is shared
  UploadTiming upload_timing = UploadTiming::round_start;

  void validate() const;
};

/// Everything the pre-training stage needs.
struct PretrainConfig {
  Architecture arch;
  ContrastiveConfig contrastive;
  AugmentationSpec augmentation;
  FederationConfig federation;

  void validate() const;
};

struct DeviceState {
  int device_id = 0;
  Dataset train;  // D_c; labels are never read during pre-training
  ModelParams main_params;
  ModelParams momentum_params;
  MemoryBank local_bank;  // Q_{l,i}
  OptimizerState optimizer;
};

struct ServerState {
  ModelParams global_params;
  std::map<int, std::vector<FeatureVec>> feature_registry;
  int round = 0;
};

/// One device's feature upload at the end of a round.
struct Upload {
  int device_id = 0;
  std::vector<FeatureVec> features;
};

/// What a device receives: anonymous feature values only.
struct RemotePayload {
  int round = 0;
  std::size_t dim = 0;
  std::vector<std::vector<double>> features;
};

/// JSON wire form of a payload: {"round", "dim", "features"}; no origin field exists.
std::string serialize_payload(const RemotePayload& payload);
RemotePayload parse_payload(std::string_view json);

struct ClientUpdate {
  ModelParams params;
  std::size_t n_samples = 0;
};

/// Normalized |D_c| / sum_i |D_i| weights.
std::vector<double> fedavg_weights(std::span<const std::size_t> sizes);

/// Sample-count weighted mean of the client parameters.
ModelParams fedavg(std::span<const ClientUpdate> updates);

/// Replaces the registry with this round's uploads. Throws ValidationError when
/// a feature's origin disagrees with the uploading device.
void collect_and_deidentify(ServerState& server, std::span<const Upload> uploads);

/// Shuffled features of every other device (Q_{r,i}); origin tags are kept for
/// auditing. Throws ValidationError when no other device has uploaded.
MemoryBank build_remote_bank(const ServerState& server, int device_id, Rng& rng);

/// The same features as build_remote_bank, stripped for the wire.
RemotePayload download_payload(const ServerState& server, int device_id, Rng& rng);

/// Q_CL at the start of a round, with the given capacity.
MemoryBank init_qcl(NegativesPolicy policy, const MemoryBank& local_bank, const MemoryBank* remote_bank,
                    std::size_t capacity);

/// Pushes this minibatch's update set into Q_CL (FIFO).
void qcl_update(NegativesPolicy policy, MemoryBank& qcl, std::span<const FeatureVec> local_batch,
                const MemoryBank* remote_bank, std::size_t count, Rng& rng);

struct LocalRoundResult {
  double mean_loss = 0.0;
  std::size_t steps = 0;
  std::size_t qcl_size = 0;
  std::size_t purity_violations = 0;  // own-origin entries seen in Q_CL under remote_only
};

/// E local epochs of MoCo-style training on one device against Q_CL.
LocalRoundResult local_cl_round(DeviceState& device, MemoryBank& qcl, const MemoryBank* remote_bank,
                                NegativesPolicy policy, const PretrainConfig& cfg, double lr, int round, Rng& rng);

/// share_count momentum-model features of a seeded subsample of the device's data.
std::vector<FeatureVec> device_upload(const DeviceState& device, std::size_t share_count, int round, Rng& rng);

struct DeviceRoundEntry {
  int device_id = 0;
  double mean_loss = 0.0;
  std::size_t qcl_size = 0;
  std::optional<double> agg_weight;  // absent when nothing was aggregated
  std::size_t local_bank_size = 0;
  std::size_t purity_violations = 0;
};

struct RoundRecord {
  int round = 0;
  double lr = 0.0;
  std::vector<DeviceRoundEntry> devices;

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};
bool operator==(const DeviceRoundEntry& a, const DeviceRoundEntry& b);

struct PretrainResult {
  ModelParams global_params;
  std::vector<RoundRecord> records;
  std::vector<ModelParams> device_params;  // final main model of every device
  std::size_t purity_violations = 0;
};

/// Devices taking part in `round`: ceil(active_ratio * n) drawn without replacement, ascending.
std::vector<int> select_devices(const FederationConfig& cfg, int round);

/// Full pre-training run. Deterministic in federation.global_seed; devices of a
/// round may train concurrently, with results identical to sequential order.
PretrainResult run_pretraining(const PretrainConfig& cfg, std::span<const Dataset> device_data);

/// CSV with header round,device_id,mean_loss,lr,qcl_size,agg_weight (empty weight when absent).
void write_round_log(std::ostream& out, std::span<const RoundRecord> records);

}  // namespace fcl
