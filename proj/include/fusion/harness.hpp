#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fusion/datagen.hpp"
#include "fusion/estimators.hpp"
#include "fusion/feasibility.hpp"

namespace fusion {

struct MethodSpec {
  TrainMethod method = TrainMethod::kPd;
  std::optional<double> alpha;  // weighted baseline only
  std::string label() const;
};

struct ExperimentConfig {
  std::string out_dir = "out";
  std::uint64_t master_seed = 1;
  int n_seeds = 10;
  std::vector<double> dials{0.0, 0.5, 1.0};
  int jobs = 1;
  double eval_frac = 0.2;
  SyntheticConfig data;
  TrainConfig train;
  std::vector<MethodSpec> methods;

  void validate() const;
  // Single JSON document; unknown keys are rejected. "preset" selects a base
  // configuration that explicit keys then override.
  static ExperimentConfig from_json_string(const std::string& text);
  static ExperimentConfig from_json_file(const std::string& path);
  // Fully resolved form, embedded in run outputs for provenance.
  std::string to_json_string() const;
};

// Reproduction-scale grid: 3 dials x 10 seeds x 7 methods at n = 5,000.
ExperimentConfig grid_preset_large();
// Reduced smoke variant of the same shape.
ExperimentConfig grid_preset_small();
// Severe structural non-overlap data preset (dial 0, carved exclusion set).
SyntheticConfig data_preset_severe();
ExperimentConfig preset_by_name(const std::string& name);

struct CellResult {
  std::string method_label;
  double dial = 0.0;
  int seed_index = 0;
  std::uint64_t data_seed = 0;
  bool ok = false;
  std::string error;
  EvalMetrics metrics;
};

struct ExperimentResult {
  std::vector<CellResult> cells;
  int n_failed = 0;
  std::string out_dir;
};

// Runs every grid cell (optionally filtered by method label), isolating
// failures: a failed cell is recorded with its reason and the sweep
// continues. Writes metrics.csv, table.txt, config_resolved.json and
// out/<cell>/trace.csv under cfg.out_dir.
ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const std::vector<std::string>& only = {});

void write_metrics_csv(const std::string& path, const std::vector<CellResult>& cells);
void write_aggregate_table(const std::string& path, const std::vector<CellResult>& cells);

// Severe-preset audit: n_datasets draws of the severe generator, each run
// through the feasibility audit; summary CSV plus one JSON per dataset.
void run_severe_audit(const std::string& out_dir, std::uint64_t master_seed, int n_datasets,
                      const GapConfig& gap_cfg);

// ---- Theory verification checks ----

struct CheckResult {
  std::string name;
  bool pass = false;
  // Documented analytic discrepancy: reported in the verdict, not a failure.
  bool flagged = false;
  std::string detail;
  std::map<std::string, double> measured;
};

struct VerifyOptions {
  std::vector<std::string> only;
  double epsilon = 0.2;  // minimax instance parameter
  std::uint64_t seed = 7;
};

std::vector<std::string> verify_check_names();
std::vector<CheckResult> verify_theory(const VerifyOptions& opts);
void write_verdicts_json(const std::string& path, const std::vector<CheckResult>& checks);
// 0 when every selected check passed.
int checks_exit_code(const std::vector<CheckResult>& checks);

}  // namespace fusion
