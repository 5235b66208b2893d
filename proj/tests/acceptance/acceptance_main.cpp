// Acceptance gate: every release criterion as one pass/fail line, exit code 1
// if any hard criterion fails. Budgeted to finish well inside an hour on one
// core; each line prints its own elapsed time.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fusion/common.hpp"
#include "fusion/datagen.hpp"
#include "fusion/feasibility.hpp"
#include "fusion/harness.hpp"
#include "fusion/rng.hpp"

namespace fs = std::filesystem;
using namespace fusion;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path work_root() {
  static const fs::path root = [] {
    fs::path p = fs::temp_directory_path() / "fusion_acceptance";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::optional<std::string> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  return std::string{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Criteria 1-7 delegate to the analytic check suite; a criterion passes when
// every listed check passes (documented flags are reported, not failed).
Outcome from_checks(const std::vector<std::string>& names) {
  VerifyOptions opts;
  opts.only = names;
  const std::vector<CheckResult> checks = verify_theory(opts);
  Outcome out;
  out.pass = true;
  for (const CheckResult& c : checks) {
    if (!c.pass) {
      out.pass = false;
      out.detail += c.name + ": " + c.detail + "  ";
    } else if (c.flagged) {
      out.detail += c.name + " [flagged]: " + c.detail + "  ";
    }
  }
  return out;
}

Outcome crit_gradients() { return from_checks({"gradient-check"}); }

Outcome crit_moment_identities() {
  return from_checks({"baseline-invariance", "moment-at-truth", "moment-decomposition"});
}

Outcome crit_pd_guarantee() { return from_checks({"pd-feasibility", "pd-convergence"}); }

Outcome crit_penalty_conditioning() { return from_checks({"penalty-conditioning"}); }

Outcome crit_weighted_path() { return from_checks({"weighted-path", "exclusion-region"}); }

Outcome crit_irreducible_overlap() { return from_checks({"irreducible-overlap"}); }

Outcome crit_minimax_toy() { return from_checks({"minimax-toy"}); }

double mean_metric(const std::vector<CellResult>& cells, const std::string& label, double dial,
                   double (*getter)(const EvalMetrics&)) {
  double acc = 0.0;
  long n = 0;
  for (const CellResult& c : cells) {
    if (!c.ok || c.method_label != label || c.dial != dial) continue;
    acc += getter(c.metrics);
    ++n;
  }
  return n > 0 ? acc / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

double get_qini(const EvalMetrics& m) { return m.qini; }
double get_mse(const EvalMetrics& m) { return m.mse_tau; }

// Directional reproduction of the benchmark grid: mean treatment-ranking
// quality of the full method dominates both single-mechanism ablations at
// every dial, stays flat across dials while the per-arm regression baseline
// collapses without overlap, and the full method is at worst second in MSE
// at the hardest dial.
Outcome crit_grid_trends() {
  ExperimentConfig cfg = grid_preset_large();
  cfg.out_dir = (work_root() / "grid").string();
  const ExperimentResult res = run_experiment(cfg);

  Outcome out;
  if (res.n_failed > 0) {
    for (const CellResult& c : res.cells)
      if (!c.ok) {
        out.detail = std::to_string(res.n_failed) + " cells failed; first: " + c.error;
        break;
      }
    return out;
  }

  bool dominance = true;
  std::string gaps;
  for (double dial : cfg.dials) {
    const double q_pd = mean_metric(res.cells, "pd", dial, get_qini);
    const double q_dual = mean_metric(res.cells, "dual_only", dial, get_qini);
    const double q_ipm = mean_metric(res.cells, "ipm_only", dial, get_qini);
    dominance = dominance && q_pd >= q_dual + 0.15 && q_pd >= q_ipm + 0.15;
    gaps += fmt("d=%g", dial) + fmt(" pd-dual=%.3f", q_pd - q_dual) +
            fmt(" pd-ipm=%.3f ", q_pd - q_ipm);
  }

  double q_min = std::numeric_limits<double>::infinity();
  double q_max = -q_min;
  for (double dial : cfg.dials) {
    const double q = mean_metric(res.cells, "pd", dial, get_qini);
    q_min = std::min(q_min, q);
    q_max = std::max(q_max, q);
  }
  const double spread = q_max - q_min;
  const double tl_drop = mean_metric(res.cells, "t_learner", 1.0, get_qini) -
                         mean_metric(res.cells, "t_learner", 0.0, get_qini);

  int better_mse = 0;
  const double pd_mse = mean_metric(res.cells, "pd", 0.0, get_mse);
  for (const MethodSpec& m : cfg.methods) {
    if (m.label() == "pd") continue;
    if (mean_metric(res.cells, m.label(), 0.0, get_mse) < pd_mse) ++better_mse;
  }

  out.pass = dominance && spread <= 0.15 && tl_drop >= 0.2 && better_mse <= 1;
  out.detail = gaps + fmt("spread=%.3f", spread) + fmt(" tl_drop=%.3f", tl_drop) +
               " mse_rank=" + std::to_string(better_mse + 1);
  return out;
}

// Representation-space feasibility-gap upper estimate beats the raw linear
// family on at least 4 of 5 minimal-overlap draws.
Outcome crit_gap_ordering() {
  SyntheticConfig dc = grid_preset_large().data;
  dc.overlap_dial = 0.0;

  GapConfig gc;
  gc.restarts = 4;
  gc.steps = 600;
  gc.batch = 256;
  gc.eta = 0.1;
  gc.max_rows = 1000;
  gc.sizes.rep_hidden = {32};
  gc.sizes.rep_out = 8;
  gc.sizes.pred_hidden = {32};
  gc.sizes.critic_hidden = {8};

  Outcome out;
  int wins = 0;
  for (int i = 0; i < 5; ++i) {
    const SyntheticDataset sd = gen_synthetic(dc, mix_seed(0x9A9A, static_cast<std::uint64_t>(i)));
    const std::vector<int> rct = sd.data.rows_of(Source::kRct);
    gc.seed = mix_seed(0xFE, static_cast<std::uint64_t>(i));
    const double rep = feasibility_gap(sd.data, rct, GapFamily::kRepNet, gc).gap;
    const double raw = feasibility_gap(sd.data, rct, GapFamily::kRawLinear, gc).gap;
    if (rep <= raw) ++wins;
    out.detail += fmt("rep=%.4f", rep) + fmt("/raw=%.4f ", raw);
  }
  out.pass = wins >= 4;
  out.detail += "wins=" + std::to_string(wins) + "/5";
  return out;
}

// Byte-identical reruns of data generation and the experiment sweep, both
// through the library API and (when FUSION_CLI points at the binary) through
// the installed command-line entry points.
Outcome crit_determinism() {
  Outcome out;
  const fs::path root = work_root() / "det";
  fs::create_directories(root);

  SyntheticConfig dc = grid_preset_large().data;
  for (const char* tag : {"g1", "g2"}) {
    const SyntheticDataset sd = gen_synthetic(dc, 123u);
    write_dataset_csv(sd.data, (root / (std::string(tag) + ".csv")).string());
    write_synthetic_sidecar(sd, (root / (std::string(tag) + ".json")).string());
  }
  if (slurp(root / "g1.csv") != slurp(root / "g2.csv") ||
      slurp(root / "g1.json") != slurp(root / "g2.json")) {
    out.detail = "api data files differ across reruns";
    return out;
  }

  ExperimentConfig cfg = grid_preset_small();
  cfg.n_seeds = 1;
  cfg.data.n_rct = 200;
  cfg.data.n_obs = 400;
  cfg.train.steps = 60;
  cfg.methods = {{TrainMethod::kPd, {}}, {TrainMethod::kTLearner, {}}};
  for (const char* tag : {"r1", "r2"}) {
    cfg.out_dir = (root / tag).string();
    run_experiment(cfg);
  }
  if (slurp(root / "r1" / "metrics.csv") != slurp(root / "r2" / "metrics.csv")) {
    out.detail = "api metrics differ across reruns";
    return out;
  }

  const char* cli = std::getenv("FUSION_CLI");
  if (cli != nullptr && *cli != '\0') {
    const std::string quiet = " > /dev/null 2>&1";
    for (const char* tag : {"c1", "c2"}) {
      const std::string cmd = std::string(cli) + " gen-data --preset grid --seed 77 --out " +
                              (root / (std::string(tag) + ".csv")).string() + quiet;
      if (std::system(cmd.c_str()) != 0) {
        out.detail = "gen-data invocation failed";
        return out;
      }
    }
    if (slurp(root / "c1.csv") != slurp(root / "c2.csv") ||
        slurp(root / "c1.json") != slurp(root / "c2.json")) {
      out.detail = "cli data files differ across reruns";
      return out;
    }

    const fs::path cfg_path = root / "cli_cfg.json";
    {
      std::ofstream f(cfg_path);
      f << cfg.to_json_string();
    }
    for (const char* tag : {"cr1", "cr2"}) {
      const std::string cmd = std::string(cli) + " run --config " + cfg_path.string() +
                              " --out " + (root / tag).string() + quiet;
      if (std::system(cmd.c_str()) != 0) {
        out.detail = "run invocation failed";
        return out;
      }
    }
    if (slurp(root / "cr1" / "metrics.csv") != slurp(root / "cr2" / "metrics.csv")) {
      out.detail = "cli metrics differ across reruns";
      return out;
    }
    out.detail = "api + cli reruns byte-identical";
  } else {
    out.detail = "api reruns byte-identical (FUSION_CLI unset, binary not exercised)";
  }
  out.pass = true;
  return out;
}

}  // namespace

int main() {
  struct Row {
    int id;
    const char* what;
    Outcome (*fn)();
  };
  const std::vector<Row> rows = {
      {1, "analytic gradients match finite differences", crit_gradients},
      {2, "moment identities (invariance, truth, decomposition)", crit_moment_identities},
      {3, "primal-dual feasibility certificate + linear tail", crit_pd_guarantee},
      {4, "penalty conditioning grows with rho, pd does not need it", crit_penalty_conditioning},
      {5, "weighted-path laws and empty exclusion region", crit_weighted_path},
      {6, "irreducible marginal overlap under representation maps", crit_irreducible_overlap},
      {7, "minimax toy infimum and documented divergence", crit_minimax_toy},
      {8, "benchmark grid trends (dominance, spread, mse rank)", crit_grid_trends},
      {9, "representation gap beats raw linear gap on 4/5 seeds", crit_gap_ordering},
      {10, "byte-identical data and metrics across reruns", crit_determinism},
  };

  std::printf("acceptance gate: %zu criteria\n", rows.size());
  int failures = 0;
  const auto t_start = std::chrono::steady_clock::now();
  for (const Row& row : rows) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = row.fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("aborted: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] criterion %2d (%6.1fs): %s\n", o.pass ? "PASS" : "FAIL", row.id, secs,
                row.what);
    if (!o.detail.empty()) std::printf("         %s\n", o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  const double total =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  std::printf("%d/%zu criteria passed in %.1fs\n", static_cast<int>(rows.size()) - failures,
              rows.size(), total);
  return failures > 0 ? 1 : 0;
}
