#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "fusion/common.hpp"
#include "fusion/datagen.hpp"
#include "fusion/discrepancy.hpp"
#include "fusion/harness.hpp"
#include "fusion/rng.hpp"

namespace fs = std::filesystem;
using namespace fusion;

namespace {

SyntheticConfig data_preset(const std::string& name) {
  if (name == "appendix-f") return SyntheticConfig{};
  if (name == "grid") return grid_preset_large().data;
  if (name == "severe") return data_preset_severe();
  throw ConfigError("unknown data preset: " + name +
                    " (expected appendix-f, grid or severe)");
}

std::string sidecar_path(const std::string& csv_path) {
  fs::path p(csv_path);
  if (p.extension() == ".csv") return p.replace_extension(".json").string();
  return csv_path + ".json";
}

void print_gen_summary(const SyntheticDataset& sd) {
  const Dataset& ds = sd.data;
  const std::vector<int> rct = ds.rows_of(Source::kRct);
  const std::vector<int> obs = ds.rows_of(Source::kObs);
  std::printf("rows: %ld (rct %zu, obs %zu), dim %d, arms %d\n", ds.n(), rct.size(),
              obs.size(), ds.dim(), ds.arms());
  auto arm_freq = [&](const std::vector<int>& rows, const char* label) {
    std::vector<long> counts(static_cast<std::size_t>(ds.arms()), 0);
    for (int r : rows) counts[static_cast<std::size_t>(ds.t[static_cast<std::size_t>(r)])]++;
    std::printf("%s arm frequencies:", label);
    for (std::size_t a = 0; a < counts.size(); ++a)
      std::printf(" %zu:%.4f", a,
                  static_cast<double>(counts[a]) / static_cast<double>(rows.size()));
    std::printf("\n");
  };
  arm_freq(rct, "rct");
  arm_freq(obs, "obs");

  TvResult tv = marginal_treatment_tv(ds, rct, obs);
  std::printf("marginal treatment tv: %.6f", tv.tv);
  if (!tv.missing_in_b.empty()) {
    std::printf(" (arms missing from obs:");
    for (int a : tv.missing_in_b) std::printf(" %d", a);
    std::printf(")");
  }
  std::printf("\n");

  const std::uint64_t sub_seed = mix_seed(sd.seed, 0x55B5);
  const std::vector<int> rct_sub = subsample_rows(rct, 2000, mix_seed(sub_seed, 0));
  const std::vector<int> obs_sub = subsample_rows(obs, 2000, mix_seed(sub_seed, 1));
  const Eigen::MatrixXd fa = joint_features(ds.x_rows(rct_sub), ds.t_rows(rct_sub), ds.arms());
  const Eigen::MatrixXd fb = joint_features(ds.x_rows(obs_sub), ds.t_rows(obs_sub), ds.arms());
  MmdResult mmd = mmd_joint(fa, fb);
  std::printf("raw joint mmd: %.6f (bandwidth %.4f, %ld vs %ld rows)\n", mmd.value,
              mmd.bandwidth, mmd.n_a, mmd.n_b);
  if (!ds.s_region.empty()) {
    long in_region = 0;
    for (std::uint8_t s : ds.s_region) in_region += s;
    std::printf("structural exclusion region: %ld rows flagged\n", in_region);
  }
}

int cmd_gen_data(const std::string& preset, const std::string& out, std::uint64_t seed,
                 std::optional<double> dial, std::optional<double> exclusion_frac) {
  SyntheticConfig cfg = data_preset(preset);
  if (dial) cfg.overlap_dial = *dial;
  if (exclusion_frac) cfg.exclusion_frac = *exclusion_frac;
  SyntheticDataset sd = gen_synthetic(cfg, seed);
  write_dataset_csv(sd.data, out);
  write_synthetic_sidecar(sd, sidecar_path(out));
  std::printf("wrote %s and %s\n", out.c_str(), sidecar_path(out).c_str());
  print_gen_summary(sd);
  return 0;
}

int cmd_run(const std::string& config_path, const std::string& preset, const std::string& out,
            std::optional<std::uint64_t> seed, std::optional<int> jobs,
            const std::vector<std::string>& only) {
  ExperimentConfig cfg;
  if (!config_path.empty())
    cfg = ExperimentConfig::from_json_file(config_path);
  else
    cfg = preset_by_name(preset);
  if (!out.empty()) cfg.out_dir = out;
  if (seed) cfg.master_seed = *seed;
  if (jobs) cfg.jobs = *jobs;

  ExperimentResult result = run_experiment(cfg, only);
  long ok = 0;
  for (const CellResult& c : result.cells)
    if (c.ok) ++ok;
  std::printf("%ld/%zu cells completed, outputs under %s\n", ok, result.cells.size(),
              result.out_dir.c_str());
  for (const CellResult& c : result.cells)
    if (!c.ok)
      std::printf("FAILED %s dial=%g seed=%d: %s\n", c.method_label.c_str(), c.dial,
                  c.seed_index, c.error.c_str());
  std::ifstream table(fs::path(result.out_dir) / "table.txt");
  if (table) std::cout << table.rdbuf();
  return result.n_failed > 0 ? 1 : 0;
}

int cmd_sweep_alpha(const std::string& preset, const std::string& out, std::uint64_t seed,
                    std::optional<double> dial, std::vector<double> grid, long steps) {
  SyntheticConfig dc = data_preset(preset);
  if (dial) dc.overlap_dial = *dial;
  if (grid.empty()) grid = {0.0, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0};
  std::sort(grid.begin(), grid.end());

  SyntheticDataset sd = gen_synthetic(dc, seed);
  Split split = make_split(sd.data, 0.2, mix_seed(seed, 0x5917));
  TrainConfig tc = grid_preset_large().train;
  if (steps > 0) tc.steps = steps;
  tc.seed = mix_seed(seed, 0xA15e);
  std::vector<AlphaSweepRow> rows = alpha_sweep(sd.data, split, tc, grid);
  write_alpha_sweep_csv(out, rows);
  std::printf("alpha,r_obs,r_rct,g_norm,dist_m0\n");
  for (const AlphaSweepRow& r : rows)
    std::printf("%g,%.6f,%.6f,%.6f,%.6f\n", r.alpha, r.r_obs, r.r_rct, r.g_norm, r.dist_m0);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_verify(const std::vector<std::string>& only, double epsilon, std::uint64_t seed,
               const std::string& out) {
  VerifyOptions opts;
  opts.only = only;
  opts.epsilon = epsilon;
  opts.seed = seed;
  std::vector<CheckResult> checks = verify_theory(opts);
  for (const CheckResult& c : checks) {
    std::printf("[%s]%s %s\n", c.pass ? "PASS" : "FAIL", c.flagged ? " [FLAGGED]" : "",
                c.name.c_str());
    std::printf("    %s\n", c.detail.c_str());
    for (const auto& [k, v] : c.measured) std::printf("    %s = %.6g\n", k.c_str(), v);
  }
  write_verdicts_json(out, checks);
  std::printf("verdicts written to %s\n", out.c_str());
  return checks_exit_code(checks);
}

int cmd_audit(const std::string& data_path, const std::string& out, std::uint64_t seed,
              int n_datasets) {
  fs::create_directories(out);
  GapConfig gc;
  if (!data_path.empty()) {
    Dataset ds = read_dataset_csv(data_path);
    gc.seed = mix_seed(seed, 0xAAD1);
    FeasibilityAudit audit = run_feasibility_audit(ds, gc);
    const std::string audit_path = (fs::path(out) / "audit_0.json").string();
    write_feasibility_audit_json(audit, audit_path);
    std::printf("gap raw_linear=%.6f raw_net=%.6f rep_net=%.6f c0_hat=%.6f\n",
                audit.gap_raw_linear, audit.gap_raw_net, audit.gap_rep_net, audit.c0_hat);
    std::printf("wrote %s\n", audit_path.c_str());
    return 0;
  }
  run_severe_audit(out, seed, n_datasets, gc);
  std::printf("wrote %d audits and severe_summary.csv under %s\n", n_datasets, out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"constrained joint estimation over randomized and observational data"};
  app.require_subcommand(1);

  std::string gd_preset = "appendix-f", gd_out;
  std::uint64_t gd_seed = 1;
  std::optional<double> gd_dial, gd_excl;
  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset CSV + sidecar");
  gen->add_option("--preset", gd_preset, "appendix-f, grid or severe");
  gen->add_option("--out", gd_out, "output CSV path")->required();
  gen->add_option("--seed", gd_seed, "generator seed");
  gen->add_option("--dial", gd_dial, "overlap dial override in [0,1]");
  gen->add_option("--exclusion-frac", gd_excl, "structural exclusion fraction override");

  std::string run_config, run_preset = "small", run_out;
  std::optional<std::uint64_t> run_seed;
  std::optional<int> run_jobs;
  std::vector<std::string> run_only;
  CLI::App* run = app.add_subcommand("run", "run a (method x seed x dial) experiment grid");
  run->add_option("--config", run_config, "experiment config JSON");
  run->add_option("--preset", run_preset, "large, small or severe (ignored with --config)");
  run->add_option("--out", run_out, "output directory override");
  run->add_option("--seed", run_seed, "master seed override");
  run->add_option("--jobs", run_jobs, "max concurrent grid cells");
  run->add_option("--only", run_only, "restrict to these method labels")->delimiter(',');

  std::string sa_preset = "grid", sa_out = "alpha_sweep.csv";
  std::uint64_t sa_seed = 1;
  std::optional<double> sa_dial;
  std::vector<double> sa_grid;
  long sa_steps = 0;
  CLI::App* sweep = app.add_subcommand("sweep-alpha", "weighted-objective path over alpha");
  sweep->add_option("--preset", sa_preset, "data preset");
  sweep->add_option("--out", sa_out, "output CSV path");
  sweep->add_option("--seed", sa_seed, "seed");
  sweep->add_option("--dial", sa_dial, "overlap dial override");
  sweep->add_option("--grid", sa_grid, "alpha grid (must include 0)")->delimiter(',');
  sweep->add_option("--steps", sa_steps, "training steps per grid point override");

  std::vector<std::string> vt_only;
  double vt_eps = 0.2;
  std::uint64_t vt_seed = 7;
  std::string vt_out = "verdicts.json";
  CLI::App* verify = app.add_subcommand("verify-theory", "run the analytic check suite");
  verify->add_option("--only", vt_only, "subset of checks")->delimiter(',');
  verify->add_option("--epsilon", vt_eps, "minimax instance parameter");
  verify->add_option("--seed", vt_seed, "suite seed");
  verify->add_option("--out", vt_out, "verdicts JSON path");

  std::string au_data, au_out = "audit_out";
  std::uint64_t au_seed = 1;
  int au_n = 10;
  CLI::App* audit = app.add_subcommand("audit-feasibility",
                                       "feasibility-gap audit on severe non-overlap data");
  audit->add_option("--data", au_data, "existing dataset CSV (generates severe data if absent)");
  audit->add_option("--out", au_out, "output directory");
  audit->add_option("--seed", au_seed, "master seed");
  audit->add_option("--n", au_n, "number of generated datasets");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(gd_preset, gd_out, gd_seed, gd_dial, gd_excl);
    if (run->parsed()) return cmd_run(run_config, run_preset, run_out, run_seed, run_jobs, run_only);
    if (sweep->parsed()) return cmd_sweep_alpha(sa_preset, sa_out, sa_seed, sa_dial, sa_grid, sa_steps);
    if (verify->parsed()) return cmd_verify(vt_only, vt_eps, vt_seed, vt_out);
    if (audit->parsed()) return cmd_audit(au_data, au_out, au_seed, au_n);
  } catch (const std::exception& e) {
    log_error(e.what());
    return 2;
  }
  return 0;
}
