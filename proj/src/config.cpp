#include "fcl/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "fcl/error.hpp"

namespace fcl {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::random_init:
      return "random_init";
    case Method::local_cl:
      return "local_cl";
    case Method::fcl:
      return "fcl";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  if (name == "random_init") return Method::random_init;
  if (name == "local_cl") return Method::local_cl;
  if (name == "fcl") return Method::fcl;
  throw ValidationError("unknown method '" + std::string(name) + "' (expected random_init, local_cl or fcl)");
}

void ExperimentConfig::resolve() {
  synthetic.validate();
  if (synthetic.n_classes < 2) throw ValidationError("config: data.n_classes must be >= 2");
  partition.validate();
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw ValidationError("config: data.train_ratio must be in (0, 1)");
  arch.input_dim = synthetic.shape.size();
  arch.feature_dim = contrastive.feature_dim;
  federation.n_devices = partition.n_devices;
  arch.validate();
  contrastive.validate();
  augmentation.validate();
  federation.validate();
  finetune.validate();
  if (seeds.empty()) throw ValidationError("config: experiment.seeds must not be empty");
  if (label_fractions.empty()) throw ValidationError("config: experiment.label_fractions must not be empty");
  for (double l : label_fractions)
    if (!(l > 0.0 && l <= 1.0)) throw ValidationError("config: label fractions must be in (0, 1]");
  if (!(ablation_label_fraction > 0.0 && ablation_label_fraction <= 1.0))
    throw ValidationError("config: ablation.label_fraction must be in (0, 1]");
  if (finetune_modes.empty()) throw ValidationError("config: finetune.modes must not be empty");
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(v);
  while (std::getline(is, item, ',')) {
    auto t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

double to_double(const std::string& v) {
  double d = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
  if (ec != std::errc() || p != v.data() + v.size()) throw ValidationError("expected a number, got '" + v + "'");
  return d;
}

template <typename Int>
Int to_int(const std::string& v) {
  Int i{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), i);
  if (ec != std::errc() || p != v.data() + v.size()) throw ValidationError("expected an integer, got '" + v + "'");
  return i;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ValidationError("expected true or false, got '" + v + "'");
}

// Shortest text that parses back to the same double.
std::string fmt(double d) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, d);
  return {buf, res.ptr};
}

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F f) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + f(xs[i]);
  return s;
}

std::string_view to_string(SkewMode m) { return m == SkewMode::dirichlet ? "dirichlet" : "dominant_class"; }

SkewMode parse_skew(const std::string& v) {
  if (v == "dirichlet") return SkewMode::dirichlet;
  if (v == "dominant_class") return SkewMode::dominant_class;
  throw ValidationError("unknown skew mode '" + v + "'");
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define FCL_DOUBLE(member) \
  Field { [](ExperimentConfig& c, const std::string& v) { c.member = to_double(v); }, [](const ExperimentConfig& c) { return fmt(c.member); } }
#define FCL_INT(member, type) \
  Field { [](ExperimentConfig& c, const std::string& v) { c.member = to_int<type>(v); }, [](const ExperimentConfig& c) { return std::to_string(c.member); } }
#define FCL_BOOL(member) \
  Field { [](ExperimentConfig& c, const std::string& v) { c.member = to_bool(v); }, [](const ExperimentConfig& c) { return std::string(c.member ? "true" : "false"); } }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"data.n_classes", FCL_INT(synthetic.n_classes, std::size_t)},
      {"data.samples_per_class", FCL_INT(synthetic.samples_per_class, std::size_t)},
      {"data.height", FCL_INT(synthetic.shape.height, std::size_t)},
      {"data.width", FCL_INT(synthetic.shape.width, std::size_t)},
      {"data.channels", FCL_INT(synthetic.shape.channels, std::size_t)},
      {"data.jitter", FCL_DOUBLE(synthetic.jitter)},
      {"data.shift_per_jitter", FCL_DOUBLE(synthetic.shift_per_jitter)},
      {"data.blob_offset_per_jitter", FCL_DOUBLE(synthetic.blob_offset_per_jitter)},
      {"data.radius_per_jitter", FCL_DOUBLE(synthetic.radius_per_jitter)},
      {"data.amplitude_per_jitter", FCL_DOUBLE(synthetic.amplitude_per_jitter)},
      {"data.background_per_jitter", FCL_DOUBLE(synthetic.background_per_jitter)},
      {"data.noise_per_jitter", FCL_DOUBLE(synthetic.noise_per_jitter)},
      {"data.tone_per_jitter", FCL_DOUBLE(synthetic.tone_per_jitter)},
      {"data.seed", FCL_INT(synthetic.seed, std::uint64_t)},
      {"data.train_ratio", FCL_DOUBLE(train_ratio)},
      {"partition.n_devices", FCL_INT(partition.n_devices, std::size_t)},
      {"partition.skew_mode", Field{[](ExperimentConfig& c, const std::string& v) { c.partition.skew_mode = parse_skew(v); },
                                    [](const ExperimentConfig& c) { return std::string(to_string(c.partition.skew_mode)); }}},
      {"partition.skew_param", FCL_DOUBLE(partition.skew_param)},
      {"model.encoder_widths",
       Field{[](ExperimentConfig& c, const std::string& v) {
               c.arch.encoder_widths.clear();
               for (const auto& s : split_list(v)) c.arch.encoder_widths.push_back(to_int<std::size_t>(s));
             },
             [](const ExperimentConfig& c) {
               return join(c.arch.encoder_widths, [](std::size_t w) { return std::to_string(w); });
             }}},
      {"model.projection_hidden", FCL_INT(arch.projection_hidden, std::size_t)},
      {"contrastive.feature_dim", FCL_INT(contrastive.feature_dim, std::size_t)},
      {"contrastive.tau", FCL_DOUBLE(contrastive.tau)},
      {"contrastive.batch_size", FCL_INT(contrastive.batch_size, std::size_t)},
      {"contrastive.bank_capacity", FCL_INT(contrastive.bank_capacity, std::size_t)},
      {"contrastive.ema_momentum", FCL_DOUBLE(contrastive.ema_momentum)},
      {"augment.crop", FCL_BOOL(augmentation.crop)},
      {"augment.crop_scale_min", FCL_DOUBLE(augmentation.crop_scale_min)},
      {"augment.crop_scale_max", FCL_DOUBLE(augmentation.crop_scale_max)},
      {"augment.flip_probability", FCL_DOUBLE(augmentation.flip_probability)},
      {"augment.rotations",
       Field{[](ExperimentConfig& c, const std::string& v) {
               c.augmentation.rotations.clear();
               for (const auto& s : split_list(v)) c.augmentation.rotations.push_back(to_int<int>(s));
             },
             [](const ExperimentConfig& c) {
               return join(c.augmentation.rotations, [](int r) { return std::to_string(r); });
             }}},
      {"augment.brightness", FCL_DOUBLE(augmentation.brightness)},
      {"augment.contrast", FCL_DOUBLE(augmentation.contrast)},
      {"augment.noise_sigma", FCL_DOUBLE(augmentation.noise_sigma)},
      {"augment.mask_probability", FCL_DOUBLE(augmentation.mask_probability)},
      {"augment.scale_jitter", FCL_DOUBLE(augmentation.scale_jitter)},
      {"augment.clamp", FCL_BOOL(augmentation.clamp)},
      {"federation.rounds", FCL_INT(federation.rounds, int)},
      {"federation.active_ratio", FCL_DOUBLE(federation.active_ratio)},
      {"federation.local_epochs", FCL_INT(federation.local_epochs, int)},
      {"federation.share_count", FCL_INT(federation.share_count, std::size_t)},
      {"federation.lr0", FCL_DOUBLE(federation.lr0)},
      {"federation.sgd_momentum", FCL_DOUBLE(federation.sgd_momentum)},
      {"federation.weight_decay", FCL_DOUBLE(federation.weight_decay)},
      {"federation.upload_timing",
       Field{[](ExperimentConfig& c, const std::string& v) { c.federation.upload_timing = parse_upload_timing(v); },
             [](const ExperimentConfig& c) { return std::string(to_string(c.federation.upload_timing)); }}},
      {"federation.qcl_capacity", FCL_INT(federation.qcl_capacity, std::size_t)},
      {"finetune.modes",
       Field{[](ExperimentConfig& c, const std::string& v) {
               c.finetune_modes.clear();
               for (const auto& s : split_list(v)) c.finetune_modes.push_back(parse_finetune_mode(s));
             },
             [](const ExperimentConfig& c) {
               return join(c.finetune_modes, [](FinetuneMode m) { return std::string(to_string(m)); });
             }}},
      {"finetune.epochs", FCL_INT(finetune.epochs, int)},
      {"finetune.rounds", FCL_INT(finetune.rounds, int)},
      {"finetune.local_epochs", FCL_INT(finetune.local_epochs, int)},
      {"finetune.local_batch_size", FCL_INT(finetune.local_batch_size, std::size_t)},
      {"finetune.federated_batch_size", FCL_INT(finetune.federated_batch_size, std::size_t)},
      {"finetune.lr", FCL_DOUBLE(finetune.lr)},
      {"finetune.probe_lr", FCL_DOUBLE(finetune.probe_lr)},
      {"finetune.decay_factor", FCL_DOUBLE(finetune.decay_factor)},
      {"finetune.decay_epochs",
       Field{[](ExperimentConfig& c, const std::string& v) {
               c.finetune.decay_epochs.clear();
               for (const auto& s : split_list(v)) c.finetune.decay_epochs.push_back(to_int<int>(s));
             },
             [](const ExperimentConfig& c) {
               return join(c.finetune.decay_epochs, [](int e) { return std::to_string(e); });
             }}},
      {"finetune.linear_probe", FCL_BOOL(finetune.linear_probe)},
      {"experiment.method", Field{[](ExperimentConfig& c, const std::string& v) { c.method = parse_method(v); },
                                  [](const ExperimentConfig& c) { return std::string(to_string(c.method)); }}},
      {"experiment.policy", Field{[](ExperimentConfig& c, const std::string& v) { c.policy = parse_policy(v); },
                                  [](const ExperimentConfig& c) { return std::string(to_string(c.policy)); }}},
      {"experiment.label_fractions",
       Field{[](ExperimentConfig& c, const std::string& v) {
               c.label_fractions.clear();
               for (const auto& s : split_list(v)) c.label_fractions.push_back(to_double(s));
             },
             [](const ExperimentConfig& c) { return join(c.label_fractions, [](double l) { return fmt(l); }); }}},
      {"experiment.seeds",
       Field{[](ExperimentConfig& c, const std::string& v) {
               c.seeds.clear();
               for (const auto& s : split_list(v)) c.seeds.push_back(to_int<std::uint64_t>(s));
             },
             [](const ExperimentConfig& c) {
               return join(c.seeds, [](std::uint64_t s) { return std::to_string(s); });
             }}},
      {"experiment.output_dir", Field{[](ExperimentConfig& c, const std::string& v) { c.output_dir = v; },
                                      [](const ExperimentConfig& c) { return c.output_dir.string(); }}},
      {"ablation.label_fraction", FCL_DOUBLE(ablation_label_fraction)},
      {"ablation.linear_probe", FCL_BOOL(ablation_linear_probe)},
      {"ablation.mode", Field{[](ExperimentConfig& c, const std::string& v) { c.ablation_mode = parse_finetune_mode(v); },
                              [](const ExperimentConfig& c) { return std::string(to_string(c.ablation_mode)); }}},
  };
  return table;
}

#undef FCL_DOUBLE
#undef FCL_INT
#undef FCL_BOOL

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(line_no) + ": expected key=value");
    const auto key = trim(std::string_view(body).substr(0, eq));
    const auto value = trim(std::string_view(body).substr(eq + 1));
    const auto it = fields().find(key);
    if (it == fields().end())
      throw ValidationError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    try {
      it->second.set(cfg, value);
    } catch (const ValidationError& e) {
      throw ValidationError("config line " + std::to_string(line_no) + " (" + key + "): " + e.what());
    }
  }
  cfg.resolve();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open config");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_config_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(cfg) + "\n";
  return out;
}

}  // namespace fcl
