#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fusion/dataset.hpp"
#include "fusion/estimators.hpp"
#include "fusion/nets.hpp"

namespace fusion {

// Model families the gap search ranges over. "raw" families read covariates
// directly; the "rep" family trains the representation jointly.
enum class GapFamily { kRawLinear, kRawNet, kRepNet };
GapFamily gap_family_from_string(const std::string& s);
std::string to_string(GapFamily f);

struct GapConfig {
  int restarts = 8;
  long steps = 600;
  long batch = 256;
  double eta = 0.05;
  double step_s0 = 200.0;
  // Row cap for the search; the reported value is always the full-row-set
  // moment norm at the best parameters found.
  long max_rows = 2000;
  NetSizes sizes;
  std::uint64_t seed = 0;
  void validate() const;
};

// Upper estimate of inf ||g_hat|| over the family: multi-restart SGD on the
// squared moment norm alone (no risk term in the objective).
struct GapResult {
  double gap = 0.0;
  Eigen::VectorXd residual;  // moment vector at the best model
  int best_restart = -1;
  std::vector<double> per_restart;
  std::optional<RepPredictor> model;
};
GapResult feasibility_gap(const Dataset& ds, const std::vector<int>& rct_rows,
                          GapFamily family, const GapConfig& cfg);

// Exact minimum over an explicit finite class, given each member's
// predictions aligned with `rows`.
double feasibility_gap_grid(const Dataset& ds, const std::vector<int>& rows,
                            const std::vector<Eigen::VectorXd>& preds);

// Plug-in lower-bound constant for a structurally excluded set S:
//   c0 = p_min (1 - p_max) P_hat(S) delta
// with p ranging over the randomized probabilities of the excluded arms.
struct GapConstant {
  double c0 = 0.0;
  double p_min = 0.0;
  double p_max = 0.0;
  double p_region = 0.0;  // empirical randomized mass of S
  double delta = 0.0;
  long n_region = 0;
  std::vector<int> excluded_arms;
};
GapConstant explicit_gap_constant(const Dataset& ds, const std::vector<int>& rct_rows,
                                  double delta);

// Outcome separation on S: min over supplied models of |mean(y - m)| on the
// given rows (each prediction vector aligned with `region_rows`).
double estimate_delta_grid(const Dataset& ds, const std::vector<int>& region_rows,
                           const std::vector<Eigen::VectorXd>& preds);

// Information retained by a feature map: held-out risk of per-arm ridge
// predictors on the features minus the same fit on raw covariates.
// eps_info clamps the raw difference at zero.
struct InfoResult {
  double eps_info = 0.0;
  double raw = 0.0;
  double risk_feats = 0.0;
  double risk_raw = 0.0;
};
InfoResult info_preservation(const Dataset& ds, const Eigen::MatrixXd& feats,
                             const std::vector<int>& train_rows,
                             const std::vector<int>& eval_rows);

// One representation's position in the overlap/information/feasibility
// tradeoff, plus a nonnegative linear surface fitted over all of them.
struct TradeoffPoint {
  std::string name;
  double eps_ov = 0.0;
  double eps_info = 0.0;
  double gap = 0.0;
  double predicted = 0.0;
};
struct TradeoffAudit {
  std::vector<TradeoffPoint> points;
  double coef_const = 0.0;
  double coef_ov = 0.0;
  double coef_info = 0.0;
  double intercept_lift = 0.0;  // extra intercept needed to reach 90% coverage
  double coverage = 0.0;        // fraction with predicted >= gap after lift
};
TradeoffAudit tradeoff_audit(const Dataset& ds,
                             const std::vector<std::pair<std::string, Eigen::MatrixXd>>& reps,
                             const GapConfig& cfg);

// Exact nonnegative least squares for up to a handful of columns, solved by
// support enumeration.
Eigen::VectorXd nnls_enumerate(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

// Dataset-level audit combining the pieces above.
struct FeasibilityAudit {
  double gap_raw_linear = 0.0;
  double gap_raw_net = 0.0;
  double gap_rep_net = 0.0;
  double c0_hat = 0.0;   // NaN when the dataset carries no exclusion tag
  double delta_hat = 0.0;
  double p_region = 0.0;
  double eps_ov = 0.0;   // joint discrepancy at the searched representation
  double eps_info = 0.0;
  std::uint64_t seed = 0;
};
FeasibilityAudit run_feasibility_audit(const Dataset& ds, const GapConfig& cfg);
void write_feasibility_audit_json(const FeasibilityAudit& audit, const std::string& path);

}  // namespace fusion
