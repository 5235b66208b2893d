#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fusion/common.hpp"

namespace fusion {

enum class Source : std::uint8_t { kRct = 0, kObs = 1 };

// Randomization design of the experimental rows. Marginal probabilities by
// default; optionally one probability vector per stratum id.
struct AssignmentProbs {
  Eigen::VectorXd marginal;
  std::vector<Eigen::VectorXd> per_stratum;

  int arms() const { return static_cast<int>(marginal.size()); }
  const Eigen::VectorXd& for_stratum(int stratum) const;
  // Each vector must sum to 1 with every entry strictly inside (0, 1).
  void validate() const;
};

struct Dataset {
  Eigen::MatrixXd x;
  std::vector<int> t;
  Eigen::VectorXd y;
  std::vector<Source> source;
  AssignmentProbs probs;
  std::vector<int> strata;  // empty, or one stratum id per row

  // Synthetic ground truth; size 0 when unknown.
  Eigen::VectorXd tau_true;
  Eigen::MatrixXd z_latent;
  Eigen::VectorXd u_latent;
  // Structural exclusion region indicator on the covariate side (the region
  // where the OBS policy never treats); empty when not applicable.
  std::vector<std::uint8_t> s_region;

  long n() const { return x.rows(); }
  int dim() const { return static_cast<int>(x.cols()); }
  int arms() const { return probs.arms(); }
  std::vector<int> rows_of(Source s) const;
  // Resolved assignment probabilities for one row (marginal or stratum).
  const Eigen::VectorXd& probs_for_row(int row) const;
  void validate() const;

  Eigen::MatrixXd x_rows(std::span<const int> rows) const;
  std::vector<int> t_rows(std::span<const int> rows) const;
  Eigen::VectorXd y_rows(std::span<const int> rows) const;
};

// CSV layout: x_0..x_{d-1}, t, y, source, p_0..p_K, tau_true, z_0, z_1, u
// (plus a trailing s_region column when the dataset carries one).
// Probability cells are blank on OBS rows; ground-truth cells are blank when
// unknown. Doubles are printed round-trip exact, so identical datasets produce
// byte-identical files.
void write_dataset_csv(const Dataset& d, const std::string& path);
Dataset read_dataset_csv(const std::string& path);

std::string format_double(double v);

}  // namespace fusion
