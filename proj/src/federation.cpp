#include "fcl/federation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>

#include <json.hpp>

#include "fcl/error.hpp"

namespace fcl {

std::string_view to_string(NegativesPolicy policy) {
  switch (policy) {
    case NegativesPolicy::local_only:
      return "local_only";
    case NegativesPolicy::local_plus_remote:
      return "local_plus_remote";
    case NegativesPolicy::remote_only:
      return "remote_only";
  }
  return "?";
}

NegativesPolicy parse_policy(std::string_view name) {
  if (name == "local_only") return NegativesPolicy::local_only;
  if (name == "local_plus_remote") return NegativesPolicy::local_plus_remote;
  if (name == "remote_only") return NegativesPolicy::remote_only;
  throw ValidationError("unknown negatives policy '" + std::string(name) +
                        "' (expected local_only, local_plus_remote or remote_only)");
}

std::string_view to_string(UploadTiming timing) {
  return timing == UploadTiming::round_start ? "round_start" : "round_end";
}

UploadTiming parse_upload_timing(std::string_view name) {
  if (name == "round_start") return UploadTiming::round_start;
  if (name == "round_end") return UploadTiming::round_end;
  throw ValidationError("unknown upload timing '" + std::string(name) + "' (expected round_start or round_end)");
}

void FederationConfig::validate() const {
  if (n_devices == 0) throw ValidationError("federation: n_devices must be positive");
  if (rounds < 0) throw ValidationError("federation: rounds must be >= 0");
  if (!(active_ratio > 0.0 && active_ratio <= 1.0)) throw ValidationError("federation: active_ratio must be in (0, 1]");
  if (local_epochs < 1) throw ValidationError("federation: local_epochs must be >= 1");
  if (share_count == 0) throw ValidationError("federation: share_count must be positive");
  if (!(lr0 >= 0.0)) throw ValidationError("federation: lr0 must be >= 0");
}

void PretrainConfig::validate() const {
  arch.validate();
  contrastive.validate();
  augmentation.validate();
  federation.validate();
  if (arch.feature_dim != contrastive.feature_dim)
    throw ValidationError("pretrain: projection output dim does not match contrastive feature_dim");
}

std::string serialize_payload(const RemotePayload& payload) {
  nlohmann::json j;
  j["round"] = payload.round;
  j["dim"] = payload.dim;
  j["features"] = payload.features;
  return j.dump();
}

RemotePayload parse_payload(std::string_view json) {
  try {
    const auto j = nlohmann::json::parse(json);
    RemotePayload p;
    p.round = j.at("round").get<int>();
    p.dim = j.at("dim").get<std::size_t>();
    p.features = j.at("features").get<std::vector<std::vector<double>>>();
    for (const auto& f : p.features)
      if (f.size() != p.dim) throw ValidationError("payload: feature width does not match dim");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("payload: ") + e.what());
  }
}

std::vector<double> fedavg_weights(std::span<const std::size_t> sizes) {
  if (sizes.empty()) throw ValidationError("fedavg: no updates");
  double total = 0.0;
  for (auto s : sizes) {
    if (s == 0) throw ValidationError("fedavg: every update needs n_samples > 0");
    total += static_cast<double>(s);
  }
  std::vector<double> w;
  w.reserve(sizes.size());
  for (auto s : sizes) w.push_back(static_cast<double>(s) / total);
  return w;
}

ModelParams fedavg(std::span<const ClientUpdate> updates) {
  std::vector<std::size_t> sizes;
  for (const auto& u : updates) sizes.push_back(u.n_samples);
  const auto weights = fedavg_weights(sizes);
  for (const auto& u : updates) require_same_architecture(updates.front().params, u.params, "fedavg");

  ModelParams out = zeros_like(updates.front().params);
  auto dst = out.tensors();
  for (std::size_t c = 0; c < updates.size(); ++c) {
    auto src = updates[c].params.tensors();
    for (std::size_t t = 0; t < dst.size(); ++t) {
      auto d = dst[t]->values();
      auto s = src[t]->values();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += weights[c] * s[i];
    }
  }
  return out;
}

void collect_and_deidentify(ServerState& server, std::span<const Upload> uploads) {
  for (const auto& up : uploads)
    for (const auto& f : up.features)
      if (f.origin != up.device_id)
        throw ValidationError("collect: feature tagged with origin " + std::to_string(f.origin) +
                              " uploaded by device " + std::to_string(up.device_id));
  server.feature_registry.clear();
  for (const auto& up : uploads) {
    auto& slot = server.feature_registry[up.device_id];
    slot.insert(slot.end(), up.features.begin(), up.features.end());
  }
}

MemoryBank build_remote_bank(const ServerState& server, int device_id, Rng& rng) {
  std::vector<FeatureVec> pool;
  for (const auto& [origin, feats] : server.feature_registry)
    if (origin != device_id) pool.insert(pool.end(), feats.begin(), feats.end());
  if (pool.empty())
    throw ValidationError("remote bank: no device other than " + std::to_string(device_id) + " has uploaded features");
  rng.shuffle(pool.begin(), pool.end());
  MemoryBank bank(pool.size());
  bank.push(pool);
  return bank;
}

RemotePayload download_payload(const ServerState& server, int device_id, Rng& rng) {
  const MemoryBank bank = build_remote_bank(server, device_id, rng);
  RemotePayload p;
  p.round = server.round;
  p.dim = bank[0].values.size();
  for (const auto& f : bank.entries()) p.features.push_back(f.values);
  return p;
}

MemoryBank init_qcl(NegativesPolicy policy, const MemoryBank& local_bank, const MemoryBank* remote_bank,
                    std::size_t capacity) {
  MemoryBank qcl(capacity);
  if (policy == NegativesPolicy::remote_only) {
    if (remote_bank == nullptr || remote_bank->empty())
      throw ValidationError("init_qcl: remote_only needs a nonempty remote bank");
    for (const auto& f : remote_bank->entries()) qcl.push(f);
    return qcl;
  }
  if (policy == NegativesPolicy::local_plus_remote && (remote_bank == nullptr || remote_bank->empty()))
    throw ValidationError("init_qcl: local_plus_remote needs a nonempty remote bank");
  for (const auto& f : local_bank.entries()) qcl.push(f);
  return qcl;
}

void qcl_update(NegativesPolicy policy, MemoryBank& qcl, std::span<const FeatureVec> local_batch,
                const MemoryBank* remote_bank, std::size_t count, Rng& rng) {
  switch (policy) {
    case NegativesPolicy::local_only:
      qcl.push(local_batch);
      return;
    case NegativesPolicy::local_plus_remote: {
      if (remote_bank == nullptr) throw ValidationError("qcl_update: local_plus_remote needs a remote bank");
      auto remote = bank_sample_uniform(*remote_bank, count, rng);
      qcl.push(local_batch);
      qcl.push(remote);
      return;
    }
    case NegativesPolicy::remote_only: {
      if (remote_bank == nullptr) throw ValidationError("qcl_update: remote_only needs a remote bank");
      qcl.push(bank_sample_uniform(*remote_bank, count, rng));
      return;
    }
  }
}

namespace {

std::vector<FeatureVec> to_features(const Tensor& rows, int origin, int round) {
  std::vector<FeatureVec> out;
  out.reserve(rows.rows());
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    auto row = rows.row(r);
    out.push_back({{row.begin(), row.end()}, origin, round});
  }
  return out;
}

}  // namespace

LocalRoundResult local_cl_round(DeviceState& device, MemoryBank& qcl, const MemoryBank* remote_bank,
                                NegativesPolicy policy, const PretrainConfig& cfg, double lr, int round, Rng& rng) {
  const auto& cc = cfg.contrastive;
  const std::size_t n = device.train.size();
  if (n == 0) throw ValidationError("local_cl_round: device " + std::to_string(device.device_id) + " has no data");
  if (cfg.federation.local_epochs < 1) throw ValidationError("local_cl_round: local_epochs must be >= 1");
  // remote_only with nothing to sample from runs without negatives rather than touching local features.
  const bool push_updates = !(policy == NegativesPolicy::remote_only && remote_bank == nullptr);

  LocalRoundResult result;
  auto audit = [&] {
    if (policy == NegativesPolicy::remote_only) result.purity_violations += qcl.count_origin(device.device_id);
  };
  audit();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t dim = device.train.shape.size();
  double loss_sum = 0.0;

  for (int epoch = 0; epoch < cfg.federation.local_epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < n; start += cc.batch_size) {
      const std::size_t b = std::min(cc.batch_size, n - start);
      Tensor xq = Tensor::matrix(b, dim);
      Tensor xk = Tensor::matrix(b, dim);
      std::vector<double> raw(dim);
      for (std::size_t r = 0; r < b; ++r) {
        auto s = device.train.sample(order[start + r]);
        std::copy(s.begin(), s.end(), raw.begin());
        auto [aq, ak] = augment_pair(raw, device.train.shape, cfg.augmentation, rng);
        std::copy(aq.begin(), aq.end(), xq.row(r).begin());
        std::copy(ak.begin(), ak.end(), xk.row(r).begin());
      }
      auto query = forward(device.main_params, xq, Mode::project);
      const Tensor keys = infer(device.momentum_params, xk, Mode::project);
      const auto nce = info_nce_batch(query.output, keys, qcl.as_matrix(cc.feature_dim), cc.tau);
      const auto grads = backward(device.main_params, query.stash, nce.grad_queries);
      sgd_step(device.main_params, grads, device.optimizer, lr);
      momentum_update(device.main_params, device.momentum_params, cc.ema_momentum);

      const auto key_feats = to_features(keys, device.device_id, round);
      device.local_bank.push(key_feats);
      if (push_updates) qcl_update(policy, qcl, key_feats, remote_bank, b, rng);
      audit();

      loss_sum += nce.loss;
      ++result.steps;
    }
  }
  result.mean_loss = loss_sum / static_cast<double>(result.steps);
  result.qcl_size = qcl.size();
  return result;
}

std::vector<FeatureVec> device_upload(const DeviceState& device, std::size_t share_count, int round, Rng& rng) {
  const std::size_t n = device.train.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx.begin(), idx.end());
  idx.resize(std::min(share_count, n));
  const Tensor feats = infer(device.momentum_params, to_batch(device.train, idx), Mode::project);
  return to_features(feats, device.device_id, round);
}

bool operator==(const DeviceRoundEntry& a, const DeviceRoundEntry& b) {
  return a.device_id == b.device_id && a.mean_loss == b.mean_loss && a.qcl_size == b.qcl_size &&
         a.agg_weight == b.agg_weight && a.local_bank_size == b.local_bank_size &&
         a.purity_violations == b.purity_violations;
}

std::vector<int> select_devices(const FederationConfig& cfg, int round) {
  const std::size_t n = cfg.n_devices;
  const auto k = std::min<std::size_t>(
      n, std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(cfg.active_ratio * static_cast<double>(n) - 1e-9))));
  std::vector<int> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  if (k < n) {
    Rng rng(derive_seed(cfg.global_seed, Stream::selection, {static_cast<std::uint64_t>(round)}));
    rng.shuffle(ids.begin(), ids.end());
    ids.resize(k);
    std::sort(ids.begin(), ids.end());
  }
  return ids;
}

PretrainResult run_pretraining(const PretrainConfig& cfg, std::span<const Dataset> device_data) {
  cfg.validate();
  const auto& fed = cfg.federation;
  if (device_data.size() != fed.n_devices)
    throw ValidationError("pretrain: " + std::to_string(device_data.size()) + " datasets for " +
                          std::to_string(fed.n_devices) + " devices");
  for (std::size_t i = 0; i < device_data.size(); ++i) {
    if (device_data[i].empty()) throw ValidationError("pretrain: device " + std::to_string(i) + " has no data");
    if (device_data[i].shape.size() != cfg.arch.input_dim)
      throw ValidationError("pretrain: device " + std::to_string(i) + " sample size does not match input_dim");
  }

  const bool exchange = fed.aggregate && uses_remote(fed.policy);
  const NegativesPolicy policy = fed.aggregate ? fed.policy : NegativesPolicy::local_only;
  // Q_CL keeps the capacity of the bank it starts from: K when it starts as a
  // copy of the local bank, the remote pool size when it starts from Q_r.
  const std::size_t qcl_capacity =
      fed.qcl_capacity > 0 ? fed.qcl_capacity
                           : (exchange && policy == NegativesPolicy::remote_only
                                  ? std::max<std::size_t>(1, (fed.n_devices - 1) * fed.share_count)
                                  : cfg.contrastive.bank_capacity);

  ServerState server;
  server.global_params = init_params(cfg.arch, derive_seed(fed.global_seed, Stream::init));

  std::vector<DeviceState> devices;
  devices.reserve(fed.n_devices);
  for (std::size_t i = 0; i < fed.n_devices; ++i) {
    DeviceState d;
    d.device_id = static_cast<int>(i);
    d.train = device_data[i];
    d.main_params = server.global_params;
    d.momentum_params = server.global_params;
    d.local_bank = MemoryBank(cfg.contrastive.bank_capacity);
    d.optimizer = make_sgd(server.global_params, fed.sgd_momentum, fed.weight_decay);
    devices.push_back(std::move(d));
  }

  // round_start: each active device encodes local samples with the model it just
  // received, stores them in its local bank, and (with exchange) uploads them,
  // so the remote bank is the other devices' fresh local banks.
  const bool refresh_first = fed.upload_timing == UploadTiming::round_start;
  const bool upload_first = exchange && refresh_first;
  auto upload_rng = [&](int device_id, int round) {
    return Rng(derive_seed(fed.global_seed, Stream::upload,
                           {static_cast<std::uint64_t>(device_id), static_cast<std::uint64_t>(round)}));
  };
  if (exchange && !upload_first) {
    // Initial exchange: features of the initial model, so round 0 already has remote negatives.
    std::vector<Upload> uploads;
    for (const auto& d : devices) {
      Rng rng = upload_rng(d.device_id, -1);
      uploads.push_back({d.device_id, device_upload(d, fed.share_count, -1, rng)});
    }
    collect_and_deidentify(server, uploads);
  }

  PretrainResult result;
  for (int t = 0; t < fed.rounds; ++t) {
    server.round = t;
    const double lr = cosine_lr(t, fed.rounds, fed.lr0);
    const auto active = select_devices(fed, t);
    std::vector<LocalRoundResult> local(active.size());
    std::vector<Upload> uploads(active.size());
    std::vector<std::exception_ptr> errors(active.size());

    if (fed.aggregate) {
      for (int id : active) {
        devices[id].main_params = server.global_params;
        devices[id].momentum_params = server.global_params;
      }
    }
    if (refresh_first) {
#pragma omp parallel for schedule(dynamic)
      for (std::int64_t k = 0; k < static_cast<std::int64_t>(active.size()); ++k) {
        DeviceState& dev = devices[static_cast<std::size_t>(active[k])];
        Rng rng = upload_rng(dev.device_id, t);
        uploads[k] = {dev.device_id, device_upload(dev, fed.share_count, t, rng)};
        dev.local_bank.push(uploads[k].features);
      }
      if (upload_first) collect_and_deidentify(server, uploads);
    }

#pragma omp parallel for schedule(dynamic)
    for (std::int64_t k = 0; k < static_cast<std::int64_t>(active.size()); ++k) {
      try {
        DeviceState& dev = devices[static_cast<std::size_t>(active[k])];
        Rng rng(derive_seed(fed.global_seed, Stream::device_round,
                            {static_cast<std::uint64_t>(dev.device_id), static_cast<std::uint64_t>(t)}));
        std::optional<MemoryBank> remote;
        if (exchange) {
          try {
            remote = build_remote_bank(server, dev.device_id, rng);
          } catch (const ValidationError&) {
            remote.reset();  // cold start: nobody else has uploaded yet
          }
        }
        NegativesPolicy effective = policy;
        MemoryBank qcl(qcl_capacity);
        if (remote) {
          qcl = init_qcl(effective, dev.local_bank, &*remote, qcl_capacity);
        } else if (effective == NegativesPolicy::local_plus_remote) {
          effective = NegativesPolicy::local_only;
          qcl = init_qcl(effective, dev.local_bank, nullptr, qcl_capacity);
        } else if (effective == NegativesPolicy::local_only) {
          qcl = init_qcl(effective, dev.local_bank, nullptr, qcl_capacity);
        }
        local[k] = local_cl_round(dev, qcl, remote ? &*remote : nullptr, effective, cfg, lr, t, rng);
        if (exchange && !upload_first) {
          Rng up_rng = upload_rng(dev.device_id, t);
          uploads[k] = {dev.device_id, device_upload(dev, fed.share_count, t, up_rng)};
        }
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);

    RoundRecord record;
    record.round = t;
    record.lr = lr;
    std::vector<double> weights;
    if (fed.aggregate) {
      std::vector<ClientUpdate> updates;
      for (int id : active) updates.push_back({devices[id].main_params, devices[id].train.size()});
      std::vector<std::size_t> sizes;
      for (const auto& u : updates) sizes.push_back(u.n_samples);
      weights = fedavg_weights(sizes);
      server.global_params = fedavg(updates);
      if (exchange && !upload_first) collect_and_deidentify(server, uploads);
    }
    for (std::size_t k = 0; k < active.size(); ++k) {
      const auto& dev = devices[static_cast<std::size_t>(active[k])];
      DeviceRoundEntry e;
      e.device_id = dev.device_id;
      e.mean_loss = local[k].mean_loss;
      e.qcl_size = local[k].qcl_size;
      if (fed.aggregate) e.agg_weight = weights[k];
      e.local_bank_size = dev.local_bank.size();
      e.purity_violations = local[k].purity_violations;
      result.purity_violations += e.purity_violations;
      record.devices.push_back(e);
    }
    result.records.push_back(std::move(record));
  }

  for (const auto& d : devices) result.device_params.push_back(d.main_params);
  if (fed.aggregate) {
    result.global_params = server.global_params;
  } else if (fed.rounds == 0) {
    result.global_params = server.global_params;
  } else {
    // Independent devices: one-shot weighted average, only used as a common starting point downstream.
    std::vector<ClientUpdate> updates;
    for (const auto& d : devices) updates.push_back({d.main_params, d.train.size()});
    result.global_params = fedavg(updates);
  }
  return result;
}

void write_round_log(std::ostream& out, std::span<const RoundRecord> records) {
  out << "round,device_id,mean_loss,lr,qcl_size,agg_weight\n";
  char buf[64];
  for (const auto& r : records) {
    for (const auto& d : r.devices) {
      out << r.round << ',' << d.device_id << ',';
      std::snprintf(buf, sizeof buf, "%.12g", d.mean_loss);
      out << buf << ',';
      std::snprintf(buf, sizeof buf, "%.12g", r.lr);
      out << buf << ',' << d.qcl_size << ',';
      if (d.agg_weight) {
        std::snprintf(buf, sizeof buf, "%.12g", *d.agg_weight);
        out << buf;
      }
      out << '\n';
    }
  }
}

}  // namespace fcl
