#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "fusion/dataset.hpp"
#include "fusion/nets.hpp"

namespace fusion {

// Biased (V-statistic) Gaussian-kernel MMD between two row sets. Bandwidth is
// the median pairwise distance over the pooled rows; raw_sq can be negative
// only through rounding, value clamps it at zero before the square root.
struct MmdResult {
  double value = 0.0;
  double raw_sq = 0.0;
  double bandwidth = 0.0;
  long n_a = 0;
  long n_b = 0;
};
MmdResult mmd_joint(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Stacks representation features with a one-hot treatment block, the joint
// embedding both discrepancy estimators operate on. feats row i pairs with
// t[i].
Eigen::MatrixXd joint_features(const Eigen::MatrixXd& feats, const std::vector<int>& t,
                               int arms);

// Mean critic output gap between two feature sets (critic IPM evaluation).
double critic_gap(const Mlp& critic, const Eigen::MatrixXd& fa, const Eigen::MatrixXd& fb);

// Total variation between empirical marginal treatment distributions, with
// the arms absent from the second set listed explicitly.
struct TvResult {
  double tv = 0.0;
  std::vector<int> missing_in_b;
};
TvResult marginal_treatment_tv(const Dataset& ds, const std::vector<int>& rows_a,
                               const std::vector<int>& rows_b);

// Deterministic subsample without replacement; output preserves input order.
std::vector<int> subsample_rows(const std::vector<int>& rows, long cap, std::uint64_t seed);

}  // namespace fusion
