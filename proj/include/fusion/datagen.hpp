#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "fusion/dataset.hpp"
#include "fusion/rng.hpp"

namespace fusion {

struct SyntheticConfig {
  long n_rct = 10000;
  long n_obs = 40000;
  int n_cont = 120;
  int n_cat = 40;
  int n_levels = 4;
  double sigma_rct = 3.0;
  double sigma_obs = 1.0;
  // 0 = minimal overlap (sigma_obs as configured, full confounder weight in
  // the OBS assignment score); 1 = large overlap (sigma_obs == sigma_rct,
  // confounder weight halved). Linear interpolation in between.
  double overlap_dial = 0.0;
  // >0 carves a structural exclusion region: the OBS policy never treats
  // rows whose latent projection falls in the top `exclusion_frac` quantile.
  double exclusion_frac = 0.0;

  double obs_sigma_effective() const {
    return sigma_obs + overlap_dial * (sigma_rct - sigma_obs);
  }
  double confounder_scale() const { return 1.0 - 0.5 * overlap_dial; }
  int dim() const { return n_cont + n_cat * n_levels; }
  void validate() const;
};

// Weight objects drawn once per seed; stored so ground-truth functions can be
// recomputed exactly from a saved dataset.
struct SyntheticWeights {
  Eigen::MatrixXd a_mix;                // 2 x n_cont latent mixing
  std::vector<Eigen::MatrixXd> w_cat;   // per categorical: L x 2 logit slopes (row 0 = reference)
  Eigen::MatrixXd b_cat;                // n_cat x L logit offsets (col 0 = reference)
  Eigen::MatrixXd w_mu;                 // n_cat x L baseline contribution table
  Eigen::MatrixXd w_tau;                // n_cat x L effect contribution table
};

struct SyntheticDataset {
  Dataset data;
  SyntheticConfig cfg;
  std::uint64_t seed = 0;
  SyntheticWeights weights;
  Eigen::MatrixXi cat_levels;  // n x n_cat raw level indices
};

SyntheticDataset gen_synthetic(const SyntheticConfig& cfg, std::uint64_t seed);

// Exact recomputation of the generator's ground-truth functions from stored
// ingredients. Throws DataError when the dataset lacks them.
Eigen::VectorXd true_tau(const SyntheticDataset& sd);
Eigen::VectorXd true_mu0(const SyntheticDataset& sd);
// Y(arm) per row; uses the additive noise recovered from the realized outcome.
Eigen::VectorXd potential_outcome(const SyntheticDataset& sd, int arm);

// Sidecar with config, seed and weight tables; pairs with the dataset CSV.
void write_synthetic_sidecar(const SyntheticDataset& sd, const std::string& path);
SyntheticDataset read_synthetic_sidecar(const std::string& csv_path, const std::string& sidecar_path);

// Discrete two-point-covariate instance used by the minimax analysis. Cell
// probabilities over (z, t), z in {a=0, b=1}: the randomized law tilts
// treated mass toward a by eps/2, the observational law tilts it away.
struct MinimaxLaw {
  double eps = 0.0;
  double p_rct[2][2];
  double p_obs[2][2];
  double y_mean[2][2];
};

MinimaxLaw minimax_law(double eps);
// x column carries z; Y is deterministic +-1 on treated cells and alternates
// within control cells so control-cell means vanish exactly (even counts).
Dataset gen_minimax_toy(double eps, long n_per_source, std::uint64_t seed);

}  // namespace fusion
