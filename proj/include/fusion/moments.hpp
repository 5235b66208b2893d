#pragma once

#include <Eigen/Dense>
#include <vector>

#include "fusion/dataset.hpp"

namespace fusion {

// Per-row moment contributions psi_k = (D_k - p_k) * (y - m), k = 1..K
// (reference arm excluded). Rows must carry assignment probabilities, i.e.
// come from the randomized source. m holds model predictions at the observed
// treatment, aligned with `rows`.
Eigen::MatrixXd moment_contributions(const Dataset& ds, const std::vector<int>& rows,
                                     const Eigen::VectorXd& m);

// Sample moment vector: column means of moment_contributions.
Eigen::VectorXd moment_estimate(const Dataset& ds, const std::vector<int>& rows,
                                const Eigen::VectorXd& m);

// Randomization test for a baseline shift u(x): reports, per non-reference
// arm, the mean of (D_k - p_k) u(x), its standard error, and the z-score.
struct InvarianceReport {
  Eigen::VectorXd mean;
  Eigen::VectorXd se;
  Eigen::VectorXd z;
};
InvarianceReport invariance_report(const Dataset& ds, const std::vector<int>& rows,
                                   const Eigen::VectorXd& u_vals);

// Max row-wise gap of the residual decomposition
//   y - m(x,t) = (y_0 - u) + sum_j D_j (y_j - y_0 - h_j)
// where m(x,t) = u + h_t (h_0 = 0). y_all column j holds the realized
// potential outcome for arm j; h column k-1 holds h_k.
double decomposition_max_gap(const Eigen::VectorXd& y, const std::vector<int>& t,
                             const Eigen::MatrixXd& y_all, const Eigen::VectorXd& u,
                             const Eigen::MatrixXd& h);

}  // namespace fusion
