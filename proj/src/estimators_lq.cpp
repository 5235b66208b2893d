#include <algorithm>
#include <cmath>
#include <limits>

#include "fusion/common.hpp"
#include "fusion/datagen.hpp"
#include "fusion/estimators.hpp"

namespace fusion {

using Eigen::MatrixXd;
using Eigen::VectorXd;

LqPdResult lq_pd_run(const LqInstance& inst, const LqPdConfig& cfg) {
  if (cfg.steps < 1) throw ConfigError("lq_pd_run: steps must be positive");
  if (cfg.rho < 0.0 || cfg.lambda_cap <= 0.0)
    throw ConfigError("lq_pd_run: need rho >= 0 and a positive dual cap");

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(inst.h_o);
  Eigen::JacobiSVD<MatrixXd> svd(inst.a);
  const double smax = svd.singularValues().maxCoeff();
  const double eta_p = cfg.eta_primal > 0.0
                           ? cfg.eta_primal
                           : 1.0 / (es.eigenvalues().maxCoeff() + cfg.rho * smax * smax);
  const double eta_d = cfg.eta_dual > 0.0 ? cfg.eta_dual : std::min(cfg.rho, 1.0) / 2.0;

  LqPdResult res;
  res.theta = VectorXd::Zero(inst.dim());
  res.nu = VectorXd::Zero(inst.n_constraints());
  const long log_every =
      cfg.log_every > 0 ? cfg.log_every : std::max<long>(1, cfg.steps / 200);

  for (long s = 0; s < cfg.steps; ++s) {
    const VectorXd g = inst.g(res.theta);
    const VectorXd grad = inst.grad_o(res.theta) + inst.a.transpose() * (res.nu + cfg.rho * g);
    res.theta -= eta_p * grad;
    const VectorXd g_new = inst.g(res.theta);
    res.nu += eta_d * g_new;
    const double nn = res.nu.norm();
    if (nn > cfg.lambda_cap) res.nu *= cfg.lambda_cap / nn;

    if (s % log_every == 0 || s == cfg.steps - 1) {
      TraceRow row;
      row.step = s;
      row.r_obs = inst.risk_o(res.theta);
      row.g_norm = g_new.norm();
      row.eps_ov = 0.0;
      row.nu_norm = res.nu.norm();
      row.objective = row.r_obs + res.nu.dot(g_new) + 0.5 * cfg.rho * g_new.squaredNorm();
      if (!std::isfinite(row.objective) || !std::isfinite(row.g_norm))
        throw DivergenceError("lq primal-dual iteration diverged", s);
      res.trace.push_back(row);
    }
  }
  res.g_norm = inst.g(res.theta).norm();
  res.eps_opt = lq_saddle_gap(inst, res.theta, res.nu, cfg.lambda_cap);
  return res;
}

double lq_saddle_gap(const LqInstance& inst, const VectorXd& theta, const VectorXd& nu,
                     double lambda_cap) {
  if (theta.size() != inst.dim() || nu.size() != inst.n_constraints())
    throw DimensionError("lq_saddle_gap: shape mismatch");
  if (lambda_cap <= 0.0) throw ConfigError("lq_saddle_gap: cap must be positive");
  const double primal = inst.risk_o(theta) + lambda_cap * inst.g(theta).norm();
  const VectorXd th_min = inst.h_o.ldlt().solve(-(inst.b_o + inst.a.transpose() * nu));
  const double dual = inst.risk_o(th_min) + nu.dot(inst.g(th_min));
  return primal - dual;
}

double lq_penalty_required_rho(const LqInstance& inst, double eps_target,
                               const std::vector<double>& rho_grid) {
  if (eps_target <= 0.0) throw ConfigError("lq_penalty_required_rho: eps must be positive");
  if (rho_grid.empty()) throw ConfigError("lq_penalty_required_rho: empty grid");
  for (std::size_t i = 1; i < rho_grid.size(); ++i)
    if (rho_grid[i] <= rho_grid[i - 1])
      throw ConfigError("lq_penalty_required_rho: grid must be ascending");
  for (double rho : rho_grid) {
    if (rho < 0.0) throw ConfigError("lq_penalty_required_rho: negative rho");
    if (inst.g(penalty_minimizer(inst, rho)).norm() <= eps_target) return rho;
  }
  return std::numeric_limits<double>::infinity();
}

std::vector<AlphaSweepRow> lq_alpha_sweep(const LqInstance& inst,
                                          const std::vector<double>& grid) {
  if (grid.empty() || grid.front() != 0.0)
    throw ConfigError("lq_alpha_sweep: grid must start at zero");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (grid[i] <= grid[i - 1]) throw ConfigError("lq_alpha_sweep: grid must be strictly ascending");
  const VectorXd theta0 = weighted_minimizer(inst, 0.0);
  std::vector<AlphaSweepRow> rows;
  for (double alpha : grid) {
    const VectorXd th = weighted_minimizer(inst, alpha);
    AlphaSweepRow row;
    row.alpha = alpha;
    row.r_obs = inst.risk_o(th);
    row.r_rct = inst.risk_r(th);
    row.g_norm = inst.g(th).norm();
    row.dist_m0 = (th - theta0).norm();
    rows.push_back(row);
  }
  return rows;
}

MinimaxAnalysis solve_minimax_toy(double eps, const std::vector<double>& grid) {
  if (grid.empty()) throw ConfigError("solve_minimax_toy: empty grid");
  const MinimaxLaw law = minimax_law(eps);

  MinimaxAnalysis out;
  out.eps = eps;
  for (int z = 0; z < 2; ++z)
    for (int t = 0; t < 2; ++t) out.tv += 0.5 * std::abs(law.p_rct[z][t] - law.p_obs[z][t]);

  double p_treated = 0.0, py_treated = 0.0;
  for (int z = 0; z < 2; ++z) {
    p_treated += law.p_rct[z][1];
    py_treated += law.p_rct[z][1] * law.y_mean[z][1];
  }
  out.zero_crossing = py_treated / p_treated;

  out.abs_g_min = std::numeric_limits<double>::infinity();
  for (double alpha : grid) {
    MinimaxCurvePoint pt;
    pt.alpha = alpha;
    pt.g_treated = py_treated - alpha * p_treated;
    out.curve.push_back(pt);
    if (std::abs(pt.g_treated) < out.abs_g_min) {
      out.abs_g_min = std::abs(pt.g_treated);
      out.alpha_star = alpha;
    }
  }
  return out;
}

double minimax_treated_moment(const Dataset& ds, const std::vector<int>& rct_rows,
                              double alpha) {
  if (rct_rows.empty()) throw DataError("minimax_treated_moment: empty row set");
  double acc = 0.0;
  for (int r : rct_rows) {
    if (ds.t[static_cast<std::size_t>(r)] == 1) acc += ds.y(r) - alpha;
  }
  return acc / static_cast<double>(rct_rows.size());
}

}  // namespace fusion
