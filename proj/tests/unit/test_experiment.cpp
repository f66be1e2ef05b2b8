#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "fcl/checkpoint.hpp"
#include "fcl/config.hpp"
#include "fcl/error.hpp"
#include "fcl/experiment.hpp"

using namespace fcl;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"(# small enough for a unit test
data.n_classes = 3
data.samples_per_class = 24
data.height = 6
data.width = 6
partition.n_devices = 3
partition.skew_param = 0.5
model.encoder_widths = 16, 8
model.projection_hidden = 8
contrastive.feature_dim = 4
contrastive.batch_size = 8
contrastive.bank_capacity = 8
federation.rounds = 2
federation.share_count = 8
finetune.epochs = 2
finetune.rounds = 2
experiment.label_fractions = 0.2, 0.8
experiment.seeds = 0, 1
)";

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "fcl_test_experiment" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig tiny(const fs::path& out) {
  auto cfg = parse_config(kTinyConfig);
  cfg.output_dir = out;
  return cfg;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FCL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

MetricsRow sample_row(double l, std::uint64_t seed, double recall) {
  MetricsRow r;
  r.method = "fcl";
  r.policy = "remote_only";
  r.label_fraction = l;
  r.seed = seed;
  r.mode = FinetuneMode::federated;
  r.mean_recall = recall;
  r.mean_precision = recall / 2;
  r.recall = {recall, recall};
  r.precision = {recall / 2, recall / 2};
  return r;
}

}  // namespace

TEST_CASE("config parsing, resolution and round trip") {
  const auto cfg = parse_config(kTinyConfig);
  CHECK(cfg.arch.input_dim == 36);
  CHECK(cfg.federation.n_devices == 3);
  CHECK(cfg.arch.feature_dim == 4);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{0, 1});
  CHECK(cfg.arch.encoder_widths == std::vector<std::size_t>{16, 8});

  const auto text = to_config_text(cfg);
  const auto again = parse_config(text);
  CHECK(to_config_text(again) == text);
  CHECK(again.contrastive.tau == cfg.contrastive.tau);
}

TEST_CASE("defaults match the desk-scale setup") {
  ExperimentConfig cfg;
  cfg.resolve();
  CHECK(cfg.partition.n_devices == 10);
  CHECK(cfg.synthetic.n_classes == 5);
  CHECK(cfg.synthetic.samples_per_class == 200);
  CHECK(cfg.arch.input_dim == 256);
  CHECK(cfg.contrastive.feature_dim == 32);
  CHECK(cfg.federation.rounds == 30);
  CHECK(cfg.seeds.size() == 5);
  CHECK(cfg.federation.lr0 == 0.03);
  CHECK(cfg.finetune.rounds == 100);
  CHECK(cfg.finetune.epochs == 20);
}

TEST_CASE("config errors name the line") {
  CHECK_THROWS_AS(parse_config("data.n_classes = 3\nbogus.key = 1\n"), ValidationError);
  try {
    parse_config("data.n_classes = 3\nbogus.key = 1\n");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("data.n_classes = three\n"), ValidationError);
  CHECK_THROWS_AS(parse_config("no equals sign\n"), ValidationError);
  CHECK_THROWS_AS(parse_config("experiment.seeds = \n"), ValidationError);
  CHECK_THROWS_AS(parse_config("experiment.policy = everything\n"), ValidationError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.txt"), IoError);
}

TEST_CASE("metrics CSV round trip and schema errors") {
  const auto dir = fresh_dir("csv");
  const std::vector<MetricsRow> rows{sample_row(0.1, 0, 0.5), sample_row(0.2, 1, 0.25)};
  const auto text = metrics_csv(rows);
  CHECK(text.rfind("method,policy,L,seed,mode,mean_recall,mean_precision,recall_0,recall_1,precision_0,precision_1\n", 0) == 0);
  write_text(dir / "a.csv", text);
  const auto back = read_metrics_csv(dir / "a.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].mean_recall == 0.25);
  CHECK(back[1].seed == 1);
  CHECK(back[0].recall == rows[0].recall);

  write_text(dir / "b.csv", "method,policy,L,seed,mode,mean_precision\nfcl,remote_only,0.1,0,federated,0.5\n");
  try {
    read_metrics_csv(dir / "b.csv");
    FAIL("expected a schema error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("b.csv") != std::string::npos);
    CHECK(std::string(e.what()).find("mean_recall") != std::string::npos);
  }
  write_text(dir / "c.csv", "method,policy,L,seed,mode,mean_recall,mean_precision\nfcl,x,0.1,0,federated,abc,0.5\n");
  CHECK_THROWS_AS(read_metrics_csv(dir / "c.csv"), ValidationError);
}

TEST_CASE("report averages seeds by hand-checkable arithmetic") {
  const auto dir = fresh_dir("report");
  const std::vector<MetricsRow> rows{sample_row(0.1, 0, 0.40), sample_row(0.1, 1, 0.50), sample_row(0.1, 2, 0.60),
                                     sample_row(0.2, 0, 0.70)};
  write_text(dir / "m.csv", metrics_csv(rows));
  const auto report = cmd_report(dir);
  // mean 50, sample std 10 over three seeds; one seed gives std 0.
  CHECK(report.find("50.00 ± 10.00") != std::string::npos);
  CHECK(report.find("70.00 ± 0.00") != std::string::npos);
  CHECK(report.find("25.00 ± 5.00") != std::string::npos);
  CHECK(report.find("fcl/remote_only") != std::string::npos);

  CHECK_THROWS_AS(cmd_report(fresh_dir("empty")), ValidationError);
  CHECK_THROWS_AS(cmd_report(dir / "missing"), IoError);
}

TEST_CASE("command pipeline on a tiny config") {
  const auto out = fresh_dir("pipeline");
  auto cfg = tiny(out);

  cmd_gen_data(cfg);
  for (std::size_t d = 0; d < 3; ++d) CHECK(fs::exists(device_file(out / "data", d)));
  const auto manifest = nlohmann::json::parse(read_text(out / "data" / "manifest.json"));
  CHECK(manifest.at("artifacts").size() == 3);
  CHECK(manifest.at("tool_version") == std::string(kToolVersion));
  CHECK(parse_config(manifest.at("config").get<std::string>()).synthetic.n_classes == 3);
  const auto first_hash = manifest.at("artifacts").at("data/device_00.fds").get<std::string>();
  cmd_gen_data(cfg);
  CHECK(nlohmann::json::parse(read_text(out / "data" / "manifest.json")).at("artifacts").at("data/device_00.fds") ==
        first_hash);

  SUBCASE("random_init writes the seeded initialization") {
    cfg.method = Method::random_init;
    cmd_pretrain(cfg);
    const auto ckpt = load_checkpoint(out / "pretrain" / "random_init" / "seed_1" / "checkpoint.fcl", cfg.arch);
    CHECK(ckpt == init_params(cfg.arch, derive_seed(1, Stream::init)));
  }
  SUBCASE("local_cl has no aggregation weights") {
    cfg.method = Method::local_cl;
    cmd_pretrain(cfg);
    const auto log = read_text(out / "pretrain" / "local_cl" / "seed_0" / "round_log.csv");
    std::istringstream in(log);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) CHECK(line.back() == ',');
    CHECK(fs::exists(out / "pretrain" / "local_cl" / "seed_0" / "device_02.fcl"));
  }
  SUBCASE("fcl remote_only records the purity check, then fine-tunes deterministically") {
    cmd_pretrain(cfg);
    const auto m = nlohmann::json::parse(read_text(out / "pretrain" / "fcl_remote_only" / "manifest.json"));
    CHECK(m.at("notes").at("qcl_origin_purity") == "passed");

    cmd_finetune_eval(cfg, std::nullopt);
    const auto csv = out / "metrics" / "fcl_remote_only.csv";
    CHECK(fs::exists(out / "metrics" / "fcl_remote_only.manifest.json"));
    const auto rows = read_metrics_csv(csv);
    CHECK(rows.size() == 2 * 2 * 2);  // modes x L x seeds
    const auto first = read_text(csv);
    cmd_finetune_eval(cfg, std::nullopt);
    CHECK(read_text(csv) == first);
    CHECK(cmd_report(out / "metrics").find("Federated fine-tuning") != std::string::npos);
  }
}

TEST_CASE("missing inputs surface as I/O errors") {
  const auto out = fresh_dir("missing");
  auto cfg = tiny(out);
  CHECK_THROWS_AS(cmd_pretrain(cfg), IoError);
  cmd_gen_data(cfg);
  CHECK_THROWS_AS(cmd_finetune_eval(cfg, std::nullopt), IoError);
  auto other = cfg;
  other.arch.encoder_widths = {12, 8};
  save_checkpoint(out / "wrong.fcl", init_params(other.arch, 0));
  CHECK_THROWS_AS(cmd_finetune_eval(cfg, out / "wrong.fcl"), ValidationError);
}

TEST_CASE("CLI exit codes") {
  const auto out = fresh_dir("cli");
  write_text(out / "tiny.cfg", kTinyConfig);
  const std::string base = " --config " + (out / "tiny.cfg").string() + " --out " + out.string();
  CHECK(run_cli("--version") == 0);
  CHECK(run_cli("") == 1);
  CHECK(run_cli("gen-data --bogus") == 1);
  CHECK(run_cli("pretrain" + base) == 2);  // no data yet
  CHECK(run_cli("gen-data" + base) == 0);
  CHECK(run_cli("pretrain --method random_init --seed 0" + base) == 0);
  CHECK(run_cli("finetune-eval --method random_init --seed 0 --mode sideways" + base) == 1);
  CHECK(run_cli("finetune-eval --method random_init --seed 0 --mode local" + base) == 0);
  CHECK(run_cli("report " + (out / "metrics").string()) == 0);
  CHECK(run_cli("report " + (out / "nowhere").string()) == 2);
  CHECK(run_cli("pretrain --policy everything" + base) == 1);
  write_text(out / "bad.cfg", "data.n_classes = 1\n");
  CHECK(run_cli("gen-data --out " + out.string() + " --config " + (out / "bad.cfg").string()) == 1);
  CHECK_FALSE(fs::exists(out / "data" / "device_09.fds"));
}
