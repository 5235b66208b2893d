#pragma once

#include <Eigen/Dense>
#include <vector>

namespace fusion {

// Qini area on randomized rows: sort descending by predicted effect (stable,
// so ties keep input order), accumulate the uplift curve
//   uplift(i) = treated_sum(i)/n_treated - control_sum(i)/n_control
// against the diagonal q * uplift(n), and integrate by trapezoid on the
// fraction grid i/n. Raw area, no normalization.
double qini_area(const Eigen::VectorXd& tau_hat, const std::vector<int>& t,
                 const Eigen::VectorXd& y);

double mse(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Decile-binned absolute percentage error: rows sorted by the true effect,
// split into 10 contiguous bins, per-bin |mean_hat - mean_true| divided by
// max(|mean_true|, floor) with floor = 0.05, averaged over bins.
double mape_deciles(const Eigen::VectorXd& tau_hat, const Eigen::VectorXd& tau_true);

struct Aggregate {
  double mean = 0.0;
  double sd = 0.0;
  long n = 0;
};
Aggregate aggregate(const std::vector<double>& values);

}  // namespace fusion
