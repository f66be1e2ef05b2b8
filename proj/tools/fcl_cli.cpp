#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "fcl/config.hpp"
#include "fcl/error.hpp"
#include "fcl/experiment.hpp"

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string policy;
  std::string method;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "key=value config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", flags.seed, "run this seed only (replaces experiment.seeds)");
  cmd->add_option("--out", flags.out, "output directory (replaces experiment.output_dir)");
  cmd->add_option("--policy", flags.policy, "local_only | local_plus_remote | remote_only");
  cmd->add_option("--method", flags.method, "random_init | local_cl | fcl");
}

fcl::ExperimentConfig resolve(const CommonFlags& flags) {
  fcl::ExperimentConfig cfg = flags.config.empty() ? fcl::ExperimentConfig{} : fcl::load_config(flags.config);
  if (flags.seed) cfg.seeds = {*flags.seed};
  if (!flags.out.empty()) cfg.output_dir = flags.out;
  if (!flags.policy.empty()) cfg.policy = fcl::parse_policy(flags.policy);
  if (!flags.method.empty()) cfg.method = fcl::parse_method(flags.method);
  cfg.resolve();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated contrastive pre-training and limited-label evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(fcl::kToolVersion));

  CommonFlags flags;
  auto* gen = app.add_subcommand("gen-data", "generate and partition the synthetic dataset");
  auto* pretrain = app.add_subcommand("pretrain", "run pre-training for the configured method");
  auto* finetune = app.add_subcommand("finetune-eval", "fine-tune with limited labels and evaluate");
  auto* ablate = app.add_subcommand("ablate", "compare the three negatives policies end to end");
  auto* report = app.add_subcommand("report", "summarize metrics CSVs as mean ± std tables");
  for (auto* cmd : {gen, pretrain, finetune, ablate}) add_common(cmd, flags);

  std::string checkpoint;
  std::string mode;
  finetune->add_option("--checkpoint", checkpoint, "start every seed from this checkpoint")
      ->check(CLI::ExistingFile);
  finetune->add_option("--mode", mode, "local | federated | both (default: finetune.modes)");

  std::string metrics_dir;
  report->add_option("dir", metrics_dir, "directory holding metrics CSV files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*report) {
      std::cout << fcl::cmd_report(metrics_dir);
      return 0;
    }
    fcl::ExperimentConfig cfg = resolve(flags);
    if (*gen) {
      fcl::cmd_gen_data(cfg);
      std::cout << "wrote " << cfg.partition.n_devices << " device files to " << (cfg.output_dir / "data").string()
                << '\n';
    } else if (*pretrain) {
      fcl::cmd_pretrain(cfg);
      std::cout << "wrote " << (cfg.output_dir / "pretrain" / fcl::run_tag(cfg.method, cfg.policy)).string() << '\n';
    } else if (*finetune) {
      if (!mode.empty() && mode != "both") cfg.finetune_modes = {fcl::parse_finetune_mode(mode)};
      std::optional<std::filesystem::path> ckpt;
      if (!checkpoint.empty()) ckpt = checkpoint;
      fcl::cmd_finetune_eval(cfg, ckpt);
      std::cout << "wrote " << (cfg.output_dir / "metrics" / (fcl::run_tag(cfg.method, cfg.policy) + ".csv")).string()
                << '\n';
    } else if (*ablate) {
      fcl::cmd_ablate(cfg);
      std::ifstream table(cfg.output_dir / "ablation" / "table.txt");
      std::cout << table.rdbuf();
      std::cout << "wrote " << (cfg.output_dir / "ablation").string() << '\n';
    }
    return 0;
  } catch (const fcl::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fcl::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
}
