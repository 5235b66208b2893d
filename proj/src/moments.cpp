#include "fusion/moments.hpp"

#include <cmath>

#include "fusion/common.hpp"

namespace fusion {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd moment_contributions(const Dataset& ds, const std::vector<int>& rows,
                              const VectorXd& m) {
  const int arms = ds.arms();
  const int k = arms - 1;
  if (k < 1) throw DataError("moment_contributions: need at least two arms");
  if (m.size() != static_cast<long>(rows.size()))
    throw DimensionError("moment_contributions: prediction length mismatch");
  MatrixXd out(static_cast<long>(rows.size()), k);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int r = rows[i];
    if (r < 0 || r >= ds.n()) throw DimensionError("moment_contributions: row out of range");
    // Design probabilities are meaningful only for randomized rows.
    if (ds.source[static_cast<std::size_t>(r)] != Source::kRct)
      throw DataError("moment_contributions: row without known assignment probabilities");
    const Eigen::VectorXd& p = ds.probs_for_row(r);
    const double resid = ds.y(r) - m(static_cast<long>(i));
    for (int arm = 1; arm < arms; ++arm) {
      const double d = ds.t[static_cast<std::size_t>(r)] == arm ? 1.0 : 0.0;
      out(static_cast<long>(i), arm - 1) = (d - p(arm)) * resid;
    }
  }
  return out;
}

VectorXd moment_estimate(const Dataset& ds, const std::vector<int>& rows, const VectorXd& m) {
  if (rows.empty()) throw DataError("moment_estimate: empty row set");
  return moment_contributions(ds, rows, m).colwise().mean();
}

InvarianceReport invariance_report(const Dataset& ds, const std::vector<int>& rows,
                                   const VectorXd& u_vals) {
  if (rows.size() < 2) throw DataError("invariance_report: need at least two rows");
  if (u_vals.size() != static_cast<long>(rows.size()))
    throw DimensionError("invariance_report: u length mismatch");
  const int arms = ds.arms();
  const int k = arms - 1;
  const long n = static_cast<long>(rows.size());

  InvarianceReport rep;
  rep.mean = VectorXd::Zero(k);
  rep.se = VectorXd::Zero(k);
  rep.z = VectorXd::Zero(k);
  MatrixXd w(n, k);
  for (long i = 0; i < n; ++i) {
    const int r = rows[static_cast<std::size_t>(i)];
    if (ds.source[static_cast<std::size_t>(r)] != Source::kRct)
      throw DataError("invariance_report: row without known assignment probabilities");
    const Eigen::VectorXd& p = ds.probs_for_row(r);
    for (int arm = 1; arm < arms; ++arm) {
      const double d = ds.t[static_cast<std::size_t>(r)] == arm ? 1.0 : 0.0;
      w(i, arm - 1) = (d - p(arm)) * u_vals(i);
    }
  }
  for (int c = 0; c < k; ++c) {
    const double mean = w.col(c).mean();
    const double var = (w.col(c).array() - mean).square().sum() / static_cast<double>(n - 1);
    const double se = std::sqrt(var / static_cast<double>(n));
    rep.mean(c) = mean;
    rep.se(c) = se;
    if (se > 0.0) rep.z(c) = mean / se;
    else rep.z(c) = mean == 0.0 ? 0.0 : std::copysign(HUGE_VAL, mean);
  }
  return rep;
}

double decomposition_max_gap(const VectorXd& y, const std::vector<int>& t,
                             const MatrixXd& y_all, const VectorXd& u, const MatrixXd& h) {
  const long n = y.size();
  const int arms = static_cast<int>(y_all.cols());
  if (static_cast<long>(t.size()) != n || y_all.rows() != n || u.size() != n ||
      h.rows() != n || h.cols() != arms - 1)
    throw DimensionError("decomposition_max_gap: shape mismatch");
  double worst = 0.0;
  for (long i = 0; i < n; ++i) {
    const int ti = t[static_cast<std::size_t>(i)];
    if (ti < 0 || ti >= arms) throw DataError("decomposition_max_gap: arm out of range");
    const double m = u(i) + (ti == 0 ? 0.0 : h(i, ti - 1));
    double rhs = y_all(i, 0) - u(i);
    if (ti != 0) rhs += y_all(i, ti) - y_all(i, 0) - h(i, ti - 1);
    worst = std::max(worst, std::abs((y(i) - m) - rhs));
  }
  return worst;
}

}  // namespace fusion
