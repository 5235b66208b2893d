#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fusion/dataset.hpp"
#include "fusion/lq.hpp"
#include "fusion/nets.hpp"

namespace fusion {

enum class TrainMethod {
  kPd,        // constrained primal-dual (augmented Lagrangian + critic)
  kPenalty,   // quadratic penalty only, dual frozen at zero
  kDualOnly,  // pd with the representation-overlap weight removed
  kIpmOnly,   // overlap penalty only, no moment terms
  kWeighted,  // (R_obs + alpha R_rct) / (1 + alpha)
  kObsOnly,
  kRctOnly,
  kTLearner,  // per-arm outcome nets on pooled data
};
TrainMethod train_method_from_string(const std::string& s);
std::string to_string(TrainMethod m);

struct TrainConfig {
  double rho = 1.0;          // quadratic moment penalty weight
  double lambda_ov = 1.0;    // representation-overlap penalty weight
  double lambda_cap = 50.0;  // dual norm cap; 0 keeps the dual at zero
  double alpha = 1.0;        // mixing weight for the weighted baseline
  long steps = 5000;
  long batch_obs = 256;
  long batch_rct = 256;
  double eta_primal = 1e-2;  // decays as eta / sqrt(1 + s/step_s0)
  double eta_dual = 1e-1;
  double eta_critic = 1e-2;
  long critic_steps = 5;
  double step_s0 = 1000.0;
  NetSizes sizes;
  bool use_rep = true;
  std::uint64_t seed = 1;
  long log_every = 50;
  void validate() const;
};

// Minibatch quantities recorded before the parameter update at that step.
struct TraceRow {
  long step = 0;
  double r_obs = 0.0;
  double g_norm = 0.0;
  double eps_ov = 0.0;
  double nu_norm = 0.0;
  double objective = 0.0;
};

struct TrainTrace {
  std::vector<TraceRow> rows;
  void write_csv(const std::string& path) const;
  static TrainTrace read_csv(const std::string& path);
};

// Held-out split drawn per source; seeded by the data cell, not the method,
// so different estimators see identical evaluation rows.
struct Split {
  std::vector<int> train_rct, train_obs, eval_rct, eval_obs;
};
Split make_split(const Dataset& ds, double eval_frac, std::uint64_t seed);

struct ModelBundle {
  TrainMethod method = TrainMethod::kPd;
  std::optional<RepPredictor> model;  // joint methods
  std::vector<Mlp> arm_models;        // per-arm baseline only
  std::optional<Mlp> critic;
  Eigen::VectorXd nu;
  TrainTrace trace;
  long steps_run = 0;

  Eigen::VectorXd predict_m(const Eigen::MatrixXd& x, const std::vector<int>& t);
  Eigen::VectorXd predict_m_rows(const Dataset& ds, const std::vector<int>& rows);
  // Effect of `arm` against the reference arm.
  Eigen::VectorXd predict_tau(const Eigen::MatrixXd& x, int arm = 1);
  Eigen::MatrixXd features(const Eigen::MatrixXd& x);
};

ModelBundle train_model(const Dataset& ds, const Split& split, const TrainConfig& cfg,
                        TrainMethod method);

struct EvalMetrics {
  double qini = 0.0;
  double mse_tau = 0.0;
  double mape = 0.0;
  double g_norm = 0.0;
  double mmd = 0.0;
  double marginal_tv = 0.0;
  double r_obs = 0.0;
};
// Held-out evaluation; effect metrics use randomized rows only. Joint-MMD
// inputs are capped at 2000 rows per source (seeded subsample).
EvalMetrics evaluate_model(ModelBundle& bundle, const Dataset& ds, const Split& split,
                           std::uint64_t seed);

struct AlphaSweepRow {
  double alpha = 0.0;
  double r_obs = 0.0;
  double r_rct = 0.0;
  double g_norm = 0.0;
  double dist_m0 = 0.0;  // L2 distance of predictions from the alpha=0 model
};
// Grid must be sorted ascending and include zero.
std::vector<AlphaSweepRow> alpha_sweep(const Dataset& ds, const Split& split,
                                       const TrainConfig& cfg, const std::vector<double>& grid);
void write_alpha_sweep_csv(const std::string& path, const std::vector<AlphaSweepRow>& rows);

// ---- Linear-quadratic instantiations (closed-form oracles available) ----

struct LqPdConfig {
  long steps = 20000;
  double rho = 1.0;
  double lambda_cap = 50.0;
  double eta_primal = 0.0;  // 0 = 1 / (lambda_max(H_o) + rho sigma_max(A)^2)
  double eta_dual = 0.0;    // 0 = rho / 2
  long log_every = 0;       // 0 = steps / 200
};

struct LqPdResult {
  Eigen::VectorXd theta;
  Eigen::VectorXd nu;
  double g_norm = 0.0;
  double eps_opt = 0.0;  // saddle-gap certificate at (theta, nu)
  std::vector<TraceRow> trace;
};
LqPdResult lq_pd_run(const LqInstance& inst, const LqPdConfig& cfg);

// Exact-penalty primal value minus the dual value at nu:
//   [R_o(th) + cap |g(th)|] - min_th' [R_o(th') + nu' g(th')].
double lq_saddle_gap(const LqInstance& inst, const Eigen::VectorXd& theta,
                     const Eigen::VectorXd& nu, double lambda_cap);

// Smallest grid entry whose closed-form penalty minimizer satisfies
// |g| <= eps_target; +inf when none qualifies.
double lq_penalty_required_rho(const LqInstance& inst, double eps_target,
                               const std::vector<double>& rho_grid);

std::vector<AlphaSweepRow> lq_alpha_sweep(const LqInstance& inst,
                                          const std::vector<double>& grid);

// ---- Discrete minimax instance ----

struct MinimaxCurvePoint {
  double alpha = 0.0;
  double g_treated = 0.0;  // population treated-arm moment E_r[D (Y - m_alpha)]
};

struct MinimaxAnalysis {
  double eps = 0.0;
  double tv = 0.0;             // total variation between the two laws
  double alpha_star = 0.0;     // grid argmin of |g_treated|
  double abs_g_min = 0.0;
  double zero_crossing = 0.0;  // analytic root of the moment curve
  std::vector<MinimaxCurvePoint> curve;
};
MinimaxAnalysis solve_minimax_toy(double eps, const std::vector<double>& grid);

// Empirical counterpart on sampled rows: mean over randomized rows of
// D * (y - alpha) with the two-value model m(z,1) = alpha, m(z,0) = 0.
double minimax_treated_moment(const Dataset& ds, const std::vector<int>& rct_rows,
                              double alpha);

}  // namespace fusion
