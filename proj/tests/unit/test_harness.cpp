#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <doctest.h>
#include <json.hpp>

#include "fusion/common.hpp"
#include "fusion/harness.hpp"

using namespace fusion;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct TmpDir {
  fs::path path;
  explicit TmpDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TmpDir() { fs::remove_all(path); }
};

// Small enough to run many grid cells in a unit test.
ExperimentConfig tiny_experiment(const std::string& out_dir) {
  ExperimentConfig cfg;
  cfg.out_dir = out_dir;
  cfg.master_seed = 5;
  cfg.n_seeds = 2;
  cfg.dials = {0.0, 1.0};
  cfg.eval_frac = 0.25;
  cfg.data.n_rct = 150;
  cfg.data.n_obs = 300;
  cfg.data.n_cont = 10;
  cfg.data.n_cat = 0;
  cfg.train.steps = 40;
  cfg.train.batch_obs = 32;
  cfg.train.batch_rct = 32;
  cfg.train.critic_steps = 1;
  cfg.train.log_every = 20;
  cfg.train.sizes.rep_hidden = {8};
  cfg.train.sizes.rep_out = 4;
  cfg.train.sizes.pred_hidden = {8};
  cfg.train.sizes.critic_hidden = {8};
  cfg.methods = {{TrainMethod::kPd, {}},
                 {TrainMethod::kObsOnly, {}},
                 {TrainMethod::kWeighted, 0.5},
                 {TrainMethod::kTLearner, {}}};
  return cfg;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("method labels carry the weighted mixing value") {
  CHECK(MethodSpec{TrainMethod::kPd, {}}.label() == "pd");
  CHECK(MethodSpec{TrainMethod::kRctOnly, {}}.label() == "rct_only");
  CHECK(MethodSpec{TrainMethod::kWeighted, {}}.label() == "weighted");
  CHECK(MethodSpec{TrainMethod::kWeighted, 1.0}.label() == "weighted");
  CHECK(MethodSpec{TrainMethod::kWeighted, 0.5}.label() == "weighted_a0.5");
}

TEST_CASE("presets have the documented shape and validate") {
  const ExperimentConfig large = grid_preset_large();
  CHECK_NOTHROW(large.validate());
  CHECK(large.dials == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(large.n_seeds == 10);
  CHECK(large.methods.size() == 7);
  CHECK(large.data.n_rct + large.data.n_obs == 5000);

  const ExperimentConfig small = grid_preset_small();
  CHECK_NOTHROW(small.validate());
  CHECK(small.n_seeds == 2);
  CHECK(small.dials.size() == 2);

  const SyntheticConfig severe = data_preset_severe();
  CHECK(severe.overlap_dial == 0.0);
  CHECK(severe.exclusion_frac == 0.25);

  const ExperimentConfig sev = preset_by_name("severe");
  CHECK(sev.dials == std::vector<double>{0.0});
  CHECK(sev.data.exclusion_frac == 0.25);
  CHECK(preset_by_name("large").out_dir == large.out_dir);
  CHECK_THROWS_AS(preset_by_name("huge"), ConfigError);
}

TEST_CASE("experiment validation") {
  ExperimentConfig cfg = grid_preset_small();
  cfg.n_seeds = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = grid_preset_small();
  cfg.dials = {0.5, 1.5};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = grid_preset_small();
  cfg.dials.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = grid_preset_small();
  cfg.eval_frac = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = grid_preset_small();
  cfg.jobs = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = grid_preset_small();
  cfg.methods.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = grid_preset_small();
  cfg.out_dir.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("config JSON round-trips through its own serialization") {
  ExperimentConfig cfg = grid_preset_small();
  cfg.methods.push_back({TrainMethod::kWeighted, 0.5});
  const std::string first = cfg.to_json_string();
  const ExperimentConfig parsed = ExperimentConfig::from_json_string(first);
  CHECK(parsed.to_json_string() == first);
  CHECK(parsed.methods.back().label() == "weighted_a0.5");
  CHECK(parsed.n_seeds == cfg.n_seeds);
  CHECK(parsed.data.n_rct == cfg.data.n_rct);
}

TEST_CASE("unknown keys and malformed documents are rejected") {
  CHECK_THROWS_AS(ExperimentConfig::from_json_string("{\"bogus\": 1}"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json_string("{\"data\": {\"rows\": 5}}"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json_string("{\"train\": {\"sizes\": {\"foo\": 1}}}"),
                  ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::from_json_string("{\"methods\": [{\"name\": \"pd\", \"x\": 2}]}"),
      ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json_string("{\"methods\": [3]}"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json_string("{\"methods\": [\"zzz\"]}"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json_string("not json"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json_string("[1, 2]"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json_string("{\"preset\": \"huge\"}"), ConfigError);
}

TEST_CASE("explicit keys override the selected preset") {
  const std::string text =
      "{\"preset\": \"small\", \"seeds\": 1, \"data\": {\"n_rct\": 300},"
      " \"train\": {\"steps\": 50}}";
  const ExperimentConfig cfg = ExperimentConfig::from_json_string(text);
  const ExperimentConfig base = grid_preset_small();
  CHECK(cfg.n_seeds == 1);
  CHECK(cfg.data.n_rct == 300);
  CHECK(cfg.data.n_obs == base.data.n_obs);
  CHECK(cfg.train.steps == 50);
  CHECK(cfg.train.batch_obs == base.train.batch_obs);
  CHECK(cfg.methods.size() == base.methods.size());
}

TEST_CASE("missing methods fall back to the full baseline set") {
  const ExperimentConfig cfg = ExperimentConfig::from_json_string("{\"methods\": []}");
  REQUIRE(cfg.methods.size() == 7);
  CHECK(cfg.methods.front().label() == "pd");
  CHECK(cfg.methods.back().label() == "t_learner");
}

TEST_CASE("shipped preset files match the built-in presets byte for byte") {
  const fs::path configs = fs::path(FUSION_SOURCE_DIR) / "configs";
  CHECK(slurp(configs / "grid_large.json") == grid_preset_large().to_json_string());
  CHECK(slurp(configs / "grid_small.json") == grid_preset_small().to_json_string());
  CHECK(slurp(configs / "severe.json") == preset_by_name("severe").to_json_string());
}

TEST_CASE("config files load and missing paths raise an io error") {
  TmpDir tmp("fusion_harness_cfg");
  const fs::path p = tmp.path / "cfg.json";
  {
    std::ofstream out(p);
    out << "{\"preset\": \"small\", \"out_dir\": \"elsewhere\"}\n";
  }
  const ExperimentConfig cfg = ExperimentConfig::from_json_file(p.string());
  CHECK(cfg.out_dir == "elsewhere");
  CHECK_THROWS_AS(ExperimentConfig::from_json_file((tmp.path / "nope.json").string()), IoError);
}

TEST_CASE("experiment sweep writes its artifacts and reruns byte-identically") {
  TmpDir tmp("fusion_harness_run");
  ExperimentConfig cfg = tiny_experiment((tmp.path / "a").string());

  const ExperimentResult res = run_experiment(cfg);
  REQUIRE(res.cells.size() == 2 * 2 * 4);
  CHECK(res.n_failed == 0);
  for (const CellResult& c : res.cells) {
    CHECK(c.ok);
    CHECK(c.error.empty());
    CHECK(std::isfinite(c.metrics.qini));
    CHECK(std::isfinite(c.metrics.mse_tau));
    CHECK(std::isfinite(c.metrics.mape));
    CHECK(std::isfinite(c.metrics.g_norm));
    CHECK(std::isfinite(c.metrics.mmd));
    CHECK(std::isfinite(c.metrics.marginal_tv));
    CHECK(std::isfinite(c.metrics.r_obs));
  }

  const fs::path a = tmp.path / "a";
  CHECK(slurp(a / "config_resolved.json") == cfg.to_json_string());
  const std::string metrics = slurp(a / "metrics.csv");
  CHECK(metrics.rfind("method,dial,seed_index,data_seed,status,", 0) == 0);
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 1 + 16);
  CHECK(!slurp(a / "table.txt").empty());
  CHECK(fs::exists(a / "out" / "pd_d0_s0" / "trace.csv"));
  CHECK(fs::exists(a / "out" / "weighted_a0.5_d1_s1" / "trace.csv"));

  SUBCASE("second run reproduces every byte") {
    ExperimentConfig cfg_b = cfg;
    cfg_b.out_dir = (tmp.path / "b").string();
    run_experiment(cfg_b);
    CHECK(slurp(tmp.path / "b" / "metrics.csv") == metrics);
    CHECK(slurp(tmp.path / "b" / "out" / "pd_d0_s0" / "trace.csv") ==
          slurp(a / "out" / "pd_d0_s0" / "trace.csv"));
  }
  SUBCASE("label filter narrows the grid") {
    ExperimentConfig cfg_c = cfg;
    cfg_c.out_dir = (tmp.path / "c").string();
    const ExperimentResult only = run_experiment(cfg_c, {"pd"});
    REQUIRE(only.cells.size() == 4);
    for (const CellResult& c : only.cells) CHECK(c.method_label == "pd");
    CHECK_THROWS_AS(run_experiment(cfg_c, {"nope"}), ConfigError);
  }
}

TEST_CASE("a diverging cell is recorded without aborting the sweep") {
  TmpDir tmp("fusion_harness_diverge");
  ExperimentConfig cfg = tiny_experiment((tmp.path / "d").string());
  cfg.n_seeds = 1;
  cfg.methods = {{TrainMethod::kPd, {}}};
  cfg.train.steps = 30;
  cfg.train.log_every = 1;
  cfg.train.eta_primal = 1e16;

  const ExperimentResult res = run_experiment(cfg);
  REQUIRE(res.cells.size() == 2);
  CHECK(res.n_failed >= 1);
  for (const CellResult& c : res.cells) {
    if (!c.ok) CHECK(!c.error.empty());
  }
  const std::string metrics = slurp(tmp.path / "d" / "metrics.csv");
  CHECK(metrics.find("failed") != std::string::npos);
  CHECK(fs::exists(tmp.path / "d" / "table.txt"));
}

TEST_CASE("severe audit emits a summary row and one report per dataset") {
  TmpDir tmp("fusion_harness_severe");
  GapConfig gc;
  gc.restarts = 1;
  gc.steps = 40;
  gc.batch = 128;
  gc.eta = 0.2;
  gc.max_rows = 300;
  gc.sizes.rep_hidden = {8};
  gc.sizes.rep_out = 4;
  gc.sizes.pred_hidden = {8};
  gc.sizes.critic_hidden = {8};

  run_severe_audit(tmp.path.string(), 11u, 1, gc);

  const std::string summary = slurp(tmp.path / "severe_summary.csv");
  CHECK(summary.rfind("index,data_seed,gap_raw_linear,", 0) == 0);
  CHECK(std::count(summary.begin(), summary.end(), '\n') == 2);

  std::ifstream in(tmp.path / "audit_0.json");
  nlohmann::json j;
  in >> j;
  CHECK(j.contains("gap_rep_net"));
  CHECK(j.contains("c0_hat"));

  CHECK_THROWS_AS(run_severe_audit(tmp.path.string(), 11u, 0, gc), ConfigError);
}

TEST_CASE("theory check registry") {
  const std::vector<std::string> names = verify_check_names();
  CHECK(names.size() == 11);
  CHECK(std::find(names.begin(), names.end(), "minimax-toy") != names.end());
  CHECK(std::find(names.begin(), names.end(), "pd-feasibility") != names.end());

  VerifyOptions opts;
  opts.only = {"zzz"};
  CHECK_THROWS_AS(verify_theory(opts), ConfigError);
}

TEST_CASE("single-check verification run with verdict output") {
  TmpDir tmp("fusion_harness_verify");
  VerifyOptions opts;
  opts.only = {"minimax-toy"};
  const std::vector<CheckResult> checks = verify_theory(opts);
  REQUIRE(checks.size() == 1);
  CHECK(checks[0].name == "minimax-toy");
  CHECK(checks[0].pass);
  // The known analytic discrepancy is reported, not failed.
  CHECK(checks[0].flagged);
  CHECK(!checks[0].measured.empty());
  CHECK(checks_exit_code(checks) == 0);

  const fs::path p = tmp.path / "verdicts.json";
  write_verdicts_json(p.string(), checks);
  std::ifstream in(p);
  nlohmann::json j;
  in >> j;
  REQUIRE(j.is_array());
  REQUIRE(j.size() == 1);
  CHECK(j[0].at("name").get<std::string>() == "minimax-toy");
  CHECK(j[0].at("pass").get<bool>());
  CHECK(j[0].at("measured").is_object());

  std::vector<CheckResult> mixed = checks;
  CheckResult bad;
  bad.name = "x";
  bad.pass = false;
  mixed.push_back(bad);
  CHECK(checks_exit_code(mixed) == 1);
}

TEST_CASE("moment decomposition check passes standalone") {
  VerifyOptions opts;
  opts.only = {"moment-decomposition"};
  const std::vector<CheckResult> checks = verify_theory(opts);
  REQUIRE(checks.size() == 1);
  CHECK(checks[0].pass);
  CHECK(!checks[0].flagged);
}

}  // TEST_SUITE
