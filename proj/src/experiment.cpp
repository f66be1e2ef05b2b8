#include "fcl/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "fcl/checkpoint.hpp"
#include "fcl/error.hpp"
#include "fcl/rng.hpp"

namespace fs = std::filesystem;

namespace fcl {

namespace {

class Stopwatch {
 public:
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string() + ": cannot create directory: " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw IoError(path.string() + ": write failed");
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string policy_column(Method method, NegativesPolicy policy) {
  return method == Method::fcl ? std::string(to_string(policy)) : "none";
}

std::string artifact_key(const fs::path& p, const fs::path& base) { return fs::relative(p, base).generic_string(); }

std::vector<ModelParams> load_device_checkpoints(const fs::path& dir, const ExperimentConfig& cfg) {
  std::vector<ModelParams> out;
  for (std::size_t d = 0; d < cfg.partition.n_devices; ++d) {
    char name[32];
    std::snprintf(name, sizeof name, "device_%02zu.fcl", d);
    out.push_back(load_checkpoint(dir / name, cfg.arch));
  }
  return out;
}

}  // namespace

std::vector<Dataset> generate_device_data(const ExperimentConfig& cfg) {
  const Dataset all = generate_synthetic(cfg.synthetic, cfg.synthetic.seed);
  PartitionSpec part = cfg.partition;
  part.seed = cfg.synthetic.seed;
  return partition(all, part);
}

std::vector<DeviceSplit> split_devices(const ExperimentConfig& cfg, std::span<const Dataset> devices) {
  std::vector<DeviceSplit> out;
  out.reserve(devices.size());
  for (std::size_t d = 0; d < devices.size(); ++d) {
    auto [train, test] = split_train_test(devices[d], cfg.train_ratio, derive_seed(cfg.synthetic.seed, {d}));
    out.push_back({std::move(train), std::move(test)});
  }
  return out;
}

fs::path device_file(const fs::path& data_dir, std::size_t device) {
  char name[32];
  std::snprintf(name, sizeof name, "device_%02zu.fds", device);
  return data_dir / name;
}

std::vector<Dataset> load_device_data(const ExperimentConfig& cfg, const fs::path& data_dir) {
  if (!fs::is_directory(data_dir)) throw IoError(data_dir.string() + ": dataset directory not found (run gen-data first)");
  std::vector<Dataset> out;
  for (std::size_t d = 0; d < cfg.partition.n_devices; ++d) {
    const auto path = device_file(data_dir, d);
    if (!fs::exists(path)) throw IoError(path.string() + ": missing device dataset");
    Dataset ds = load_dataset(path);
    if (ds.shape.size() != cfg.synthetic.shape.size() || ds.n_classes != cfg.synthetic.n_classes)
      throw ValidationError(path.string() + ": shape or class count disagrees with the config");
    out.push_back(std::move(ds));
  }
  return out;
}

std::string run_tag(Method method, NegativesPolicy policy) {
  if (method == Method::fcl) return "fcl_" + std::string(to_string(policy));
  return std::string(to_string(method));
}

PretrainConfig make_pretrain_config(const ExperimentConfig& cfg, Method method, NegativesPolicy policy,
                                    std::uint64_t seed) {
  PretrainConfig pc;
  pc.arch = cfg.arch;
  pc.contrastive = cfg.contrastive;
  pc.augmentation = cfg.augmentation;
  pc.federation = cfg.federation;
  pc.federation.global_seed = seed;
  pc.federation.policy = method == Method::local_cl ? NegativesPolicy::local_only : policy;
  pc.federation.aggregate = method != Method::local_cl;
  pc.validate();
  return pc;
}

PretrainResult pretrain_method(const ExperimentConfig& cfg, std::span<const DeviceSplit> devices, Method method,
                               NegativesPolicy policy, std::uint64_t seed) {
  const PretrainConfig pc = make_pretrain_config(cfg, method, policy, seed);
  if (method == Method::random_init) {
    PretrainResult r;
    r.global_params = init_params(pc.arch, derive_seed(seed, Stream::init));
    return r;
  }
  std::vector<Dataset> train;
  train.reserve(devices.size());
  for (const auto& d : devices) train.push_back(d.train.data);
  return run_pretraining(pc, train);
}

Metrics finetune_and_evaluate(const ExperimentConfig& cfg, std::span<const DeviceSplit> devices,
                              const ModelParams& global, std::span<const ModelParams> per_device,
                              double label_fraction, std::uint64_t seed, FinetuneMode mode) {
  if (!per_device.empty() && per_device.size() != devices.size())
    throw ValidationError("finetune: one starting model per device expected");
  FinetuneConfig ft = cfg.finetune;
  ft.mode = mode;
  ft.label_fraction = label_fraction;

  std::vector<LabeledSubset> labeled;
  labeled.reserve(devices.size());
  for (std::size_t d = 0; d < devices.size(); ++d)
    labeled.push_back(label_subset(devices[d].train, label_fraction, derive_seed(seed, {d})));

  std::vector<Metrics> per_device_metrics(devices.size());
  if (mode == FinetuneMode::federated) {
    const auto result = finetune_federated(labeled, global, ft, seed);
    for (std::size_t d = 0; d < devices.size(); ++d) per_device_metrics[d] = evaluate(result.params, devices[d].test);
  } else {
    std::vector<std::exception_ptr> errors(devices.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t d = 0; d < devices.size(); ++d) {
      try {
        const ModelParams& start = per_device.empty() ? global : per_device[d];
        const auto result = finetune_local(labeled[d], start, ft, seed, static_cast<int>(d));
        per_device_metrics[d] = evaluate(result.params, devices[d].test);
      } catch (...) {
        errors[d] = std::current_exception();
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return aggregate_metrics(per_device_metrics, mode);
}

MetricsRow make_row(Method method, NegativesPolicy policy, double label_fraction, std::uint64_t seed,
                    FinetuneMode mode, const Metrics& metrics) {
  return {std::string(to_string(method)), policy_column(method, policy), label_fraction, seed, mode,
          metrics.mean_recall, metrics.mean_precision, metrics.per_class_recall, metrics.per_class_precision};
}

std::string metrics_csv(std::span<const MetricsRow> rows) {
  const std::size_t n_classes = rows.empty() ? 0 : rows.front().recall.size();
  std::ostringstream out;
  out << "method,policy,L,seed,mode,mean_recall,mean_precision";
  for (std::size_t c = 0; c < n_classes; ++c) out << ",recall_" << c;
  for (std::size_t c = 0; c < n_classes; ++c) out << ",precision_" << c;
  out << '\n';
  for (const auto& r : rows) {
    if (r.recall.size() != n_classes || r.precision.size() != n_classes)
      throw ValidationError("metrics rows disagree on the class count");
    out << r.method << ',' << r.policy << ',' << fmt_g(r.label_fraction) << ',' << r.seed << ',' << to_string(r.mode)
        << ',' << fmt_g(r.mean_recall) << ',' << fmt_g(r.mean_precision);
    for (double v : r.recall) out << ',' << fmt_g(v);
    for (double v : r.precision) out << ',' << fmt_g(v);
    out << '\n';
  }
  return out.str();
}

std::vector<MetricsRow> read_metrics_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open");
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) {
      if (!cell.empty() && cell.back() == '\r') cell.pop_back();
      cells.push_back(cell);
    }
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty metrics file");
  const auto header = split(line);
  auto column = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ValidationError(path.string() + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_method = column("method"), c_policy = column("policy"), c_l = column("L"),
                    c_seed = column("seed"), c_mode = column("mode"), c_recall = column("mean_recall"),
                    c_precision = column("mean_precision");
  std::vector<std::size_t> c_rc, c_pc;
  for (std::size_t c = 0;; ++c) {
    const auto it = std::find(header.begin(), header.end(), "recall_" + std::to_string(c));
    if (it == header.end()) break;
    c_rc.push_back(static_cast<std::size_t>(it - header.begin()));
    c_pc.push_back(column("precision_" + std::to_string(c)));
  }

  std::vector<MetricsRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size())
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " columns, got " + std::to_string(cells.size()));
    auto number = [&](std::size_t col) {
      try {
        std::size_t used = 0;
        const double v = std::stod(cells[col], &used);
        if (used != cells[col].size()) throw std::invalid_argument("trailing");
        return v;
      } catch (const std::exception&) {
        throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": bad number in column '" +
                              header[col] + "'");
      }
    };
    MetricsRow r;
    r.method = cells[c_method];
    r.policy = cells[c_policy];
    r.label_fraction = number(c_l);
    r.seed = static_cast<std::uint64_t>(number(c_seed));
    try {
      r.mode = parse_finetune_mode(cells[c_mode]);
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    r.mean_recall = number(c_recall);
    r.mean_precision = number(c_precision);
    for (auto c : c_rc) r.recall.push_back(number(c));
    for (auto c : c_pc) r.precision.push_back(number(c));
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["tool_version"] = kToolVersion;
  j["command"] = command;
  j["config"] = config_text;
  j["artifacts"] = artifacts;
  j["wall_seconds"] = wall_seconds;
  if (!notes.empty()) j["notes"] = notes;
  return j.dump(2) + "\n";
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256: digest init failed");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

void write_manifest(const fs::path& path, const RunManifest& manifest) { write_text(path, manifest.to_json()); }

void cmd_gen_data(const ExperimentConfig& cfg) {
  Stopwatch clock;
  const fs::path dir = cfg.output_dir / "data";
  ensure_dir(dir);
  const auto devices = generate_device_data(cfg);
  RunManifest m{"gen-data", to_config_text(cfg), {}, {}, {}};
  for (std::size_t d = 0; d < devices.size(); ++d) {
    const auto path = device_file(dir, d);
    save_dataset(path, devices[d]);
    m.artifacts[artifact_key(path, cfg.output_dir)] = sha256_file(path);
  }
  m.wall_seconds["generate"] = clock.seconds();
  write_manifest(dir / "manifest.json", m);
}

void cmd_pretrain(const ExperimentConfig& cfg) {
  const auto devices = split_devices(cfg, load_device_data(cfg, cfg.output_dir / "data"));
  const fs::path base = cfg.output_dir / "pretrain" / run_tag(cfg.method, cfg.policy);
  ensure_dir(base);
  RunManifest m{"pretrain", to_config_text(cfg), {}, {}, {}};
  for (std::size_t d = 0; d < devices.size(); ++d) {
    const auto path = device_file(cfg.output_dir / "data", d);
    m.artifacts[artifact_key(path, cfg.output_dir)] = sha256_file(path);
  }
  std::size_t violations = 0;
  for (const auto seed : cfg.seeds) {
    Stopwatch clock;
    const auto result = pretrain_method(cfg, devices, cfg.method, cfg.policy, seed);
    const fs::path dir = base / ("seed_" + std::to_string(seed));
    ensure_dir(dir);
    save_checkpoint(dir / "checkpoint.fcl", result.global_params);
    m.artifacts[artifact_key(dir / "checkpoint.fcl", cfg.output_dir)] = sha256_file(dir / "checkpoint.fcl");
    if (cfg.method == Method::local_cl) {
      for (std::size_t d = 0; d < result.device_params.size(); ++d) {
        char name[32];
        std::snprintf(name, sizeof name, "device_%02zu.fcl", d);
        save_checkpoint(dir / name, result.device_params[d]);
        m.artifacts[artifact_key(dir / name, cfg.output_dir)] = sha256_file(dir / name);
      }
    }
    if (cfg.method != Method::random_init) {
      std::ostringstream log;
      write_round_log(log, result.records);
      write_text(dir / "round_log.csv", log.str());
      m.artifacts[artifact_key(dir / "round_log.csv", cfg.output_dir)] = sha256_file(dir / "round_log.csv");
    }
    violations += result.purity_violations;
    m.wall_seconds["seed_" + std::to_string(seed)] = clock.seconds();
  }
  if (cfg.method == Method::fcl && cfg.policy == NegativesPolicy::remote_only)
    m.notes["qcl_origin_purity"] = violations == 0 ? "passed" : "failed: " + std::to_string(violations) + " own-origin entries";
  write_manifest(base / "manifest.json", m);
  if (violations > 0) throw Error("remote_only run placed own-origin features in Q_CL");
}

void cmd_finetune_eval(const ExperimentConfig& cfg, const std::optional<fs::path>& checkpoint) {
  const auto devices = split_devices(cfg, load_device_data(cfg, cfg.output_dir / "data"));
  const std::string tag = run_tag(cfg.method, cfg.policy);
  const fs::path pre_dir = cfg.output_dir / "pretrain" / tag;
  const fs::path out_dir = cfg.output_dir / "metrics";
  ensure_dir(out_dir);

  RunManifest m{"finetune-eval", to_config_text(cfg), {}, {}, {}};
  struct Start {
    ModelParams global;
    std::vector<ModelParams> per_device;
  };
  std::vector<Start> starts;
  for (const auto seed : cfg.seeds) {
    Start s;
    const fs::path seed_dir = pre_dir / ("seed_" + std::to_string(seed));
    const fs::path path = checkpoint ? *checkpoint : seed_dir / "checkpoint.fcl";
    if (!fs::exists(path)) throw IoError(path.string() + ": checkpoint not found (run pretrain first)");
    s.global = load_checkpoint(path, cfg.arch);
    m.artifacts[path.generic_string()] = sha256_file(path);
    if (!checkpoint && cfg.method == Method::local_cl) s.per_device = load_device_checkpoints(seed_dir, cfg);
    starts.push_back(std::move(s));
  }
  write_manifest(out_dir / (tag + ".manifest.json"), m);

  std::vector<MetricsRow> rows;
  for (const auto mode : cfg.finetune_modes)
    for (const double l : cfg.label_fractions)
      for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
        const auto metrics =
            finetune_and_evaluate(cfg, devices, starts[i].global, starts[i].per_device, l, cfg.seeds[i], mode);
        rows.push_back(make_row(cfg.method, cfg.policy, l, cfg.seeds[i], mode, metrics));
      }
  write_text(out_dir / (tag + ".csv"), metrics_csv(rows));
}

AblationSummary cmd_ablate(const ExperimentConfig& cfg) {
  const fs::path dir = cfg.output_dir / "ablation";
  ensure_dir(dir);
  Stopwatch data_clock;
  const auto devices = split_devices(cfg, generate_device_data(cfg));
  RunManifest m{"ablate", to_config_text(cfg), {}, {}, {}};
  m.wall_seconds["data"] = data_clock.seconds();

  const std::vector<NegativesPolicy> policies{NegativesPolicy::local_only, NegativesPolicy::local_plus_remote,
                                              NegativesPolicy::remote_only};
  const double l = cfg.ablation_label_fraction;
  const FinetuneMode mode = cfg.ablation_mode;
  ExperimentConfig probe_cfg = cfg;
  probe_cfg.finetune.linear_probe = cfg.ablation_linear_probe;

  AblationSummary summary;
  for (const auto seed : cfg.seeds) {
    Stopwatch clock;
    const auto base = pretrain_method(cfg, devices, Method::random_init, NegativesPolicy::local_only, seed);
    summary.rows.push_back(make_row(Method::random_init, NegativesPolicy::local_only, l, seed, mode,
                                    finetune_and_evaluate(probe_cfg, devices, base.global_params, {}, l, seed, mode)));
    for (const auto policy : policies) {
      const auto pre = pretrain_method(cfg, devices, Method::fcl, policy, seed);
      if (policy == NegativesPolicy::remote_only && pre.purity_violations > 0)
        throw Error("remote_only run placed own-origin features in Q_CL");
      summary.rows.push_back(make_row(Method::fcl, policy, l, seed, mode,
                                      finetune_and_evaluate(probe_cfg, devices, pre.global_params, {}, l, seed, mode)));
    }
    m.wall_seconds["seed_" + std::to_string(seed)] = clock.seconds();
  }

  auto mean_of = [&](const std::string& method, const std::string& policy) {
    AblationSummary::Row row{method == "fcl" ? policy : method, 0.0, 0.0};
    std::size_t n = 0;
    for (const auto& r : summary.rows)
      if (r.method == method && r.policy == policy) {
        row.mean_recall += r.mean_recall;
        row.mean_precision += r.mean_precision;
        ++n;
      }
    row.mean_recall /= static_cast<double>(n);
    row.mean_precision /= static_cast<double>(n);
    return row;
  };
  summary.random_init = mean_of("random_init", "none");
  for (const auto policy : policies) summary.policies.push_back(mean_of("fcl", std::string(to_string(policy))));

  std::ostringstream table;
  table << std::fixed << std::setprecision(2);
  table << "policy               mean_recall(%)  mean_precision(%)\n";
  for (const auto& r : summary.policies)
    table << std::left << std::setw(21) << r.label << std::right << std::setw(14) << 100 * r.mean_recall
          << std::setw(19) << 100 * r.mean_precision << '\n';
  table << "\npairwise deltas (later minus earlier, percentage points)\n";
  const char* ref_delta[] = {"+2.73", "+0.58", "+3.31"};
  const std::pair<int, int> pairs[] = {{0, 1}, {1, 2}, {0, 2}};
  for (int k = 0; k < 3; ++k) {
    const auto& a = summary.policies[pairs[k].first];
    const auto& b = summary.policies[pairs[k].second];
    table << std::showpos << "  " << b.label << " - " << a.label << ": recall " << 100 * (b.mean_recall - a.mean_recall)
          << ", precision " << 100 * (b.mean_precision - a.mean_precision) << std::noshowpos
          << "   (full-scale reference recall delta " << ref_delta[k] << ")\n";
  }
  table << "\nbaseline random_init: recall " << 100 * summary.random_init.mean_recall << ", precision "
        << 100 * summary.random_init.mean_precision << '\n';
  table << std::showpos << "remote_only - random_init: recall "
        << 100 * (summary.policies[2].mean_recall - summary.random_init.mean_recall) << std::noshowpos << '\n';
  table << "\nfull-scale reference recall (context only): local_only 44.72, local_plus_remote 47.45, remote_only "
           "48.03, random_init 43.15\n";
  table << "label fraction " << fmt_g(l) << ", " << to_string(mode) << " fine-tuning"
        << (cfg.ablation_linear_probe ? " (linear probe)" : "") << ", " << cfg.seeds.size() << " seeds\n";

  write_manifest(dir / "manifest.json", m);
  write_text(dir / "metrics.csv", metrics_csv(summary.rows));
  write_text(dir / "table.txt", table.str());
  return summary;
}

namespace {

struct Cell {
  std::vector<double> recall;
  std::vector<double> precision;
};

std::string mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return "-";
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  const double sd = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", 100 * mean, 100 * sd);
  return buf;
}

// Full-scale recall per L (10/20/40/80 %), shown next to the desk-scale tables.
const std::map<std::pair<std::string, std::string>, std::string>& reference_recall() {
  static const std::map<std::pair<std::string, std::string>, std::string> ref = {
      {{"local", "random_init"}, "21.56 / 23.13 / 24.88 / 23.92"},
      {{"local", "local_cl"}, "26.57 / 28.82 / 31.46 / 34.27"},
      {{"local", "fcl"}, "30.41 / 34.41 / 37.03 / 39.25"},
      {{"federated", "random_init"}, "43.15 / 45.63 / 50.73 / 55.61"},
      {{"federated", "local_cl"}, "43.41 / 45.69 / 50.35 / 55.47"},
      {{"federated", "fcl"}, "48.03 / 51.50 / 55.13 / 59.23"},
  };
  return ref;
}

}  // namespace

std::string cmd_report(const fs::path& metrics_dir) {
  if (!fs::is_directory(metrics_dir)) throw IoError(metrics_dir.string() + ": not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(metrics_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  if (files.empty()) throw ValidationError(metrics_dir.string() + ": no metrics CSV files");
  std::sort(files.begin(), files.end());

  // mode -> method label -> L -> cell
  std::map<std::string, std::map<std::string, std::map<double, Cell>>> grid;
  std::map<std::string, std::set<double>> fractions;
  std::map<std::string, std::string> base_method;
  for (const auto& f : files)
    for (const auto& r : read_metrics_csv(f)) {
      const std::string mode(to_string(r.mode));
      const std::string label = r.policy == "none" ? r.method : r.method + "/" + r.policy;
      base_method[label] = r.method;
      auto& cell = grid[mode][label][r.label_fraction];
      cell.recall.push_back(r.mean_recall);
      cell.precision.push_back(r.mean_precision);
      fractions[mode].insert(r.label_fraction);
    }
  if (grid.empty()) throw ValidationError(metrics_dir.string() + ": metrics files contain no rows");

  std::ostringstream out;
  for (const auto& [mode, methods] : grid) {
    out << (mode == "local" ? "Local fine-tuning (device-averaged)" : "Federated fine-tuning (pooled test sets)")
        << ", mean ± std over seeds, %\n";
    for (const char* metric : {"recall", "precision"}) {
      out << "\n  " << metric << '\n' << "  " << std::left << std::setw(28) << "method";
      for (double l : fractions[mode]) out << std::setw(18) << ("L=" + fmt_g(100 * l) + "%");
      out << "seeds\n";
      for (const auto& [label, cells] : methods) {
        out << "  " << std::setw(28) << label;
        std::size_t n_seeds = 0;
        for (double l : fractions[mode]) {
          const auto it = cells.find(l);
          const std::vector<double> empty;
          const auto& xs = it == cells.end() ? empty : (metric[0] == 'r' ? it->second.recall : it->second.precision);
          n_seeds = std::max(n_seeds, xs.size());
          out << std::setw(xs.empty() ? 18 : 19) << mean_std(xs);  // "±" is two bytes
        }
        out << n_seeds << '\n';
      }
    }
    out << "\n  full-scale reference recall at L=10/20/40/80% (context only)\n";
    std::set<std::string> shown;
    for (const auto& [label, cells] : methods) {
      const auto& bm = base_method[label];
      const auto it = reference_recall().find({mode, bm});
      if (it != reference_recall().end() && shown.insert(bm).second)
        out << "  " << std::setw(28) << bm << it->second << '\n';
    }
    out << std::right << '\n';
  }
  return out.str();
}

}  // namespace fcl
