#include "fusion/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "fusion/common.hpp"

namespace fusion {
namespace {

using Eigen::MatrixXd;
using Eigen::MatrixXi;
using Eigen::VectorXd;

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Baseline surface. xc = continuous block, z = latent pair, u = confounder,
// cat_mu = sum of the per-categorical baseline table entries at the realized
// levels, scaled by 1/sqrt(n_cat).
double mu0_value(const VectorXd& xc, double z1, double z2, double u, double cat_mu) {
  return 1.2 * std::tanh(xc(0)) + 0.8 * std::sin(xc(1)) +
         0.5 * xc(2) * xc(3) / (1.0 + std::abs(xc(3))) -
         0.7 * std::log(1.0 + std::abs(xc(4))) +
         0.3 * z1 * z1 / (1.0 + z1 * z1) - 0.2 * z2 * z2 / (1.0 + z2 * z2) +
         0.6 * u + 0.4 * cat_mu;
}

double tau_value(const VectorXd& xc, double z1, double z2, double cat_tau) {
  return 0.5 + 0.7 * std::tanh(0.7 * xc(5) + 0.3 * xc(6)) -
         0.5 * std::sin(0.5 * xc(7)) + 0.4 * z1 / (1.0 + std::abs(z1)) -
         0.3 * z2 / (1.0 + std::abs(z2)) +
         0.25 * std::tanh(xc(8) * xc(9) / (1.0 + std::abs(xc(9)))) + 0.5 * cat_tau;
}

double noise_scale(const VectorXd& xc) {
  return 0.8 + 0.2 * std::abs(xc(0)) / (1.0 + std::abs(xc(0)));
}

double obs_score(const VectorXd& xc, double z1, double z2, double u, double u_scale) {
  return 0.6 * std::tanh(xc(0)) + 0.4 * std::sin(xc(1)) -
         0.3 * xc(2) * xc(2) / (1.0 + std::abs(xc(2))) + 0.5 * z1 - 0.2 * z2 +
         0.9 * u_scale * u;
}

SyntheticWeights draw_weights(const SyntheticConfig& cfg, Rng& rng) {
  SyntheticWeights w;
  w.a_mix.resize(2, cfg.n_cont);
  for (int j = 0; j < cfg.n_cont; ++j)
    for (int r = 0; r < 2; ++r) w.a_mix(r, j) = rng.normal();

  w.w_cat.assign(cfg.n_cat, MatrixXd::Zero(cfg.n_levels, 2));
  w.b_cat = MatrixXd::Zero(cfg.n_cat, cfg.n_levels);
  for (int j = 0; j < cfg.n_cat; ++j)
    for (int l = 1; l < cfg.n_levels; ++l) {
      w.w_cat[j](l, 0) = rng.normal();
      w.w_cat[j](l, 1) = rng.normal();
      w.b_cat(j, l) = rng.normal();
    }

  w.w_mu.resize(cfg.n_cat, cfg.n_levels);
  for (int j = 0; j < cfg.n_cat; ++j)
    for (int l = 0; l < cfg.n_levels; ++l) w.w_mu(j, l) = rng.normal();
  w.w_tau.resize(cfg.n_cat, cfg.n_levels);
  for (int j = 0; j < cfg.n_cat; ++j)
    for (int l = 0; l < cfg.n_levels; ++l) w.w_tau(j, l) = rng.normal();
  return w;
}

struct CatSums {
  double mu = 0.0;
  double tau = 0.0;
};

CatSums cat_contributions(const SyntheticWeights& w, const MatrixXi& levels, long row,
                          int n_cat) {
  CatSums s;
  for (int j = 0; j < n_cat; ++j) {
    s.mu += w.w_mu(j, levels(row, j));
    s.tau += w.w_tau(j, levels(row, j));
  }
  double norm = n_cat > 0 ? std::sqrt(static_cast<double>(n_cat)) : 1.0;
  s.mu /= norm;
  s.tau /= norm;
  return s;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (n_rct < 1 || n_obs < 1) throw ConfigError("synthetic: sample counts must be positive");
  if (n_cont < 10) throw ConfigError("synthetic: need at least 10 continuous covariates");
  if (n_cat < 0) throw ConfigError("synthetic: n_cat must be nonnegative");
  if (n_cat > 0 && n_levels < 2) throw ConfigError("synthetic: categorical levels must be >= 2");
  if (!(sigma_rct > 0.0) || !(sigma_obs > 0.0))
    throw ConfigError("synthetic: latent scales must be positive");
  if (!(overlap_dial >= 0.0 && overlap_dial <= 1.0))
    throw ConfigError("synthetic: overlap_dial must lie in [0,1]");
  if (!(exclusion_frac >= 0.0 && exclusion_frac < 1.0))
    throw ConfigError("synthetic: exclusion_frac must lie in [0,1)");
}

SyntheticDataset gen_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);

  SyntheticDataset sd;
  sd.cfg = cfg;
  sd.seed = seed;
  sd.weights = draw_weights(cfg, rng);

  Eigen::Vector2d excl_dir = Eigen::Vector2d::Zero();
  if (cfg.exclusion_frac > 0.0) {
    excl_dir << rng.normal(), rng.normal();
    double nrm = excl_dir.norm();
    if (nrm < 1e-12) excl_dir << 1.0, 0.0;
    else excl_dir /= nrm;
  }

  const long n = cfg.n_rct + cfg.n_obs;
  const int d = cfg.dim();
  Dataset& ds = sd.data;
  ds.x = MatrixXd::Zero(n, d);
  ds.t.assign(n, 0);
  ds.y = VectorXd::Zero(n);
  ds.source.assign(n, Source::kRct);
  ds.probs.marginal.resize(2);
  ds.probs.marginal << 0.5, 0.5;
  ds.strata.clear();
  ds.tau_true = VectorXd::Zero(n);
  ds.z_latent = MatrixXd::Zero(n, 2);
  ds.u_latent = VectorXd::Zero(n);
  ds.s_region.assign(n, 0);
  sd.cat_levels = MatrixXi::Zero(n, std::max(cfg.n_cat, 1));

  VectorXd mu0_all(n), noise_all(n);
  const double sig_obs = cfg.obs_sigma_effective();
  const double u_scale = cfg.confounder_scale();

  // Row draw order is part of the format contract: z pair, continuous noise,
  // categorical levels, confounder, assignment, outcome noise.
  VectorXd logits(cfg.n_levels), probs(cfg.n_levels);
  for (long i = 0; i < n; ++i) {
    const bool is_rct = i < cfg.n_rct;
    const double zsig = is_rct ? cfg.sigma_rct : sig_obs;
    const double z1 = rng.normal(0.0, zsig);
    const double z2 = rng.normal(0.0, zsig);
    ds.z_latent(i, 0) = z1;
    ds.z_latent(i, 1) = z2;
    ds.source[i] = is_rct ? Source::kRct : Source::kObs;

    VectorXd xc(cfg.n_cont);
    for (int j = 0; j < cfg.n_cont; ++j)
      xc(j) = z1 * sd.weights.a_mix(0, j) + z2 * sd.weights.a_mix(1, j) + rng.normal();
    ds.x.row(i).head(cfg.n_cont) = xc.transpose();

    for (int j = 0; j < cfg.n_cat; ++j) {
      logits(0) = 0.0;
      for (int l = 1; l < cfg.n_levels; ++l)
        logits(l) = z1 * sd.weights.w_cat[j](l, 0) + z2 * sd.weights.w_cat[j](l, 1) +
                    sd.weights.b_cat(j, l);
      double mx = logits.maxCoeff();
      probs = (logits.array() - mx).exp();
      probs /= probs.sum();
      std::vector<double> pv(probs.data(), probs.data() + cfg.n_levels);
      int level = rng.categorical(pv);
      sd.cat_levels(i, j) = level;
      ds.x(i, cfg.n_cont + j * cfg.n_levels + level) = 1.0;
    }

    const double u = rng.normal();
    ds.u_latent(i) = u;

    int t;
    if (is_rct) {
      t = rng.uniform01() < 0.5 ? 1 : 0;
    } else {
      double pi = sigmoid(obs_score(xc, z1, z2, u, u_scale));
      t = rng.uniform01() < pi ? 1 : 0;
    }
    ds.t[i] = t;

    CatSums cs = cat_contributions(sd.weights, sd.cat_levels, i, cfg.n_cat);
    const double mu0 = mu0_value(xc, z1, z2, u, cs.mu);
    const double tau = tau_value(xc, z1, z2, cs.tau);
    const double eps = noise_scale(xc) * rng.normal();
    mu0_all(i) = mu0;
    noise_all(i) = eps;
    ds.tau_true(i) = tau;
    ds.y[i] = mu0 + t * tau + eps;
  }

  if (cfg.exclusion_frac > 0.0) {
    // Threshold at the empirical (1 - frac) quantile of the OBS projection,
    // then zero out treatment in the region and rebuild Y from stored noise.
    std::vector<double> proj_obs;
    proj_obs.reserve(cfg.n_obs);
    for (long i = cfg.n_rct; i < n; ++i)
      proj_obs.push_back(excl_dir(0) * ds.z_latent(i, 0) + excl_dir(1) * ds.z_latent(i, 1));
    std::sort(proj_obs.begin(), proj_obs.end());
    long idx = static_cast<long>(std::floor((1.0 - cfg.exclusion_frac) * cfg.n_obs));
    idx = std::min<long>(std::max<long>(idx, 0), cfg.n_obs - 1);
    const double cut = proj_obs[static_cast<std::size_t>(idx)];
    for (long i = 0; i < n; ++i) {
      double s = excl_dir(0) * ds.z_latent(i, 0) + excl_dir(1) * ds.z_latent(i, 1);
      ds.s_region[i] = s > cut ? 1 : 0;
      if (ds.s_region[i] == 1 && ds.source[i] == Source::kObs && ds.t[i] == 1) {
        ds.t[i] = 0;
        ds.y[i] = mu0_all(i) + noise_all(i);
      }
    }
  }

  ds.validate();
  return sd;
}

Eigen::VectorXd true_tau(const SyntheticDataset& sd) {
  const long n = sd.data.n();
  VectorXd out(n);
  for (long i = 0; i < n; ++i) {
    CatSums cs = cat_contributions(sd.weights, sd.cat_levels, i, sd.cfg.n_cat);
    out(i) = tau_value(sd.data.x.row(i).head(sd.cfg.n_cont).transpose(),
                       sd.data.z_latent(i, 0), sd.data.z_latent(i, 1), cs.tau);
  }
  return out;
}

Eigen::VectorXd true_mu0(const SyntheticDataset& sd) {
  const long n = sd.data.n();
  VectorXd out(n);
  for (long i = 0; i < n; ++i) {
    CatSums cs = cat_contributions(sd.weights, sd.cat_levels, i, sd.cfg.n_cat);
    out(i) = mu0_value(sd.data.x.row(i).head(sd.cfg.n_cont).transpose(),
                       sd.data.z_latent(i, 0), sd.data.z_latent(i, 1), sd.data.u_latent(i),
                       cs.mu);
  }
  return out;
}

Eigen::VectorXd potential_outcome(const SyntheticDataset& sd, int arm) {
  if (arm < 0 || arm > 1) throw ConfigError("potential_outcome: arm out of range");
  VectorXd mu0 = true_mu0(sd);
  VectorXd tau = true_tau(sd);
  const long n = sd.data.n();
  VectorXd out(n);
  for (long i = 0; i < n; ++i) {
    double eps = sd.data.y[i] - mu0(i) - sd.data.t[i] * tau(i);
    out(i) = mu0(i) + arm * tau(i) + eps;
  }
  return out;
}

namespace {

nlohmann::json matrix_to_json(const MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (long i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (long j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixXd matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw DataError("sidecar: expected array of rows");
  long rows = static_cast<long>(j.size());
  long cols = rows > 0 ? static_cast<long>(j[0].size()) : 0;
  MatrixXd m(rows, cols);
  for (long i = 0; i < rows; ++i) {
    if (static_cast<long>(j[i].size()) != cols) throw DataError("sidecar: ragged matrix");
    for (long c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

}  // namespace

void write_synthetic_sidecar(const SyntheticDataset& sd, const std::string& path) {
  nlohmann::json j;
  j["seed"] = sd.seed;
  j["config"] = {{"n_rct", sd.cfg.n_rct},
                 {"n_obs", sd.cfg.n_obs},
                 {"n_cont", sd.cfg.n_cont},
                 {"n_cat", sd.cfg.n_cat},
                 {"n_levels", sd.cfg.n_levels},
                 {"sigma_rct", sd.cfg.sigma_rct},
                 {"sigma_obs", sd.cfg.sigma_obs},
                 {"overlap_dial", sd.cfg.overlap_dial},
                 {"exclusion_frac", sd.cfg.exclusion_frac}};
  j["weights"]["a_mix"] = matrix_to_json(sd.weights.a_mix);
  nlohmann::json wc = nlohmann::json::array();
  for (const auto& m : sd.weights.w_cat) wc.push_back(matrix_to_json(m));
  j["weights"]["w_cat"] = std::move(wc);
  j["weights"]["b_cat"] = matrix_to_json(sd.weights.b_cat);
  j["weights"]["w_mu"] = matrix_to_json(sd.weights.w_mu);
  j["weights"]["w_tau"] = matrix_to_json(sd.weights.w_tau);
  nlohmann::json lv = nlohmann::json::array();
  for (long i = 0; i < sd.cat_levels.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (long c = 0; c < sd.cat_levels.cols(); ++c) row.push_back(sd.cat_levels(i, c));
    lv.push_back(std::move(row));
  }
  j["cat_levels"] = std::move(lv);

  std::ofstream out(path);
  if (!out) throw IoError("cannot open sidecar for writing: " + path);
  out << j.dump(2) << "\n";
}

SyntheticDataset read_synthetic_sidecar(const std::string& csv_path,
                                        const std::string& sidecar_path) {
  std::ifstream in(sidecar_path);
  if (!in) throw IoError("cannot open sidecar: " + sidecar_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("sidecar: invalid JSON: ") + e.what());
  }

  SyntheticDataset sd;
  try {
    const auto& c = j.at("config");
    sd.cfg.n_rct = c.at("n_rct").get<long>();
    sd.cfg.n_obs = c.at("n_obs").get<long>();
    sd.cfg.n_cont = c.at("n_cont").get<int>();
    sd.cfg.n_cat = c.at("n_cat").get<int>();
    sd.cfg.n_levels = c.at("n_levels").get<int>();
    sd.cfg.sigma_rct = c.at("sigma_rct").get<double>();
    sd.cfg.sigma_obs = c.at("sigma_obs").get<double>();
    sd.cfg.overlap_dial = c.at("overlap_dial").get<double>();
    sd.cfg.exclusion_frac = c.at("exclusion_frac").get<double>();
    sd.seed = j.at("seed").get<std::uint64_t>();
    sd.weights.a_mix = matrix_from_json(j.at("weights").at("a_mix"));
    for (const auto& m : j.at("weights").at("w_cat"))
      sd.weights.w_cat.push_back(matrix_from_json(m));
    sd.weights.b_cat = matrix_from_json(j.at("weights").at("b_cat"));
    sd.weights.w_mu = matrix_from_json(j.at("weights").at("w_mu"));
    sd.weights.w_tau = matrix_from_json(j.at("weights").at("w_tau"));
    const auto& lv = j.at("cat_levels");
    long rows = static_cast<long>(lv.size());
    long cols = rows > 0 ? static_cast<long>(lv[0].size()) : 0;
    sd.cat_levels.resize(rows, cols);
    for (long i = 0; i < rows; ++i)
      for (long c2 = 0; c2 < cols; ++c2) sd.cat_levels(i, c2) = lv[i][c2].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("sidecar: missing or malformed field: ") + e.what());
  }

  sd.data = read_dataset_csv(csv_path);
  if (sd.data.n() != sd.cfg.n_rct + sd.cfg.n_obs)
    throw DataError("sidecar/CSV mismatch: row count");
  if (sd.data.dim() != sd.cfg.dim()) throw DataError("sidecar/CSV mismatch: covariate dim");
  return sd;
}

MinimaxLaw minimax_law(double eps) {
  if (!(eps >= 0.0 && eps < 0.5)) throw ConfigError("minimax_law: eps must lie in [0, 0.5)");
  MinimaxLaw law;
  law.eps = eps;
  law.p_rct[0][1] = 0.25 + eps / 2.0;
  law.p_rct[1][1] = 0.25 - eps / 2.0;
  law.p_rct[0][0] = 0.25;
  law.p_rct[1][0] = 0.25;
  law.p_obs[0][1] = 0.25 - eps / 2.0;
  law.p_obs[1][1] = 0.25 + eps / 2.0;
  law.p_obs[0][0] = 0.25;
  law.p_obs[1][0] = 0.25;
  law.y_mean[0][1] = 1.0;
  law.y_mean[1][1] = -1.0;
  law.y_mean[0][0] = 0.0;
  law.y_mean[1][0] = 0.0;
  return law;
}

Dataset gen_minimax_toy(double eps, long n_per_source, std::uint64_t seed) {
  if (n_per_source < 4) throw ConfigError("gen_minimax_toy: need at least 4 rows per source");
  MinimaxLaw law = minimax_law(eps);
  Rng rng(seed);

  const long n = 2 * n_per_source;
  Dataset ds;
  ds.x = MatrixXd::Zero(n, 1);
  ds.t.assign(n, 0);
  ds.y = VectorXd::Zero(n);
  ds.source.assign(n, Source::kRct);
  ds.probs.marginal.resize(2);
  ds.probs.marginal << 0.5, 0.5;

  // Control outcomes alternate +1/-1 within each (z, t=0) cell so the
  // realized cell means are exactly zero whenever the cell count is even.
  int flip[2] = {0, 0};
  for (long i = 0; i < n; ++i) {
    const bool is_rct = i < n_per_source;
    const auto& p = is_rct ? law.p_rct : law.p_obs;
    std::vector<double> cells = {p[0][0], p[0][1], p[1][0], p[1][1]};
    int cell = rng.categorical(cells);
    int z = cell / 2;
    int t = cell % 2;
    ds.x(i, 0) = static_cast<double>(z);
    ds.t[i] = t;
    ds.source[i] = is_rct ? Source::kRct : Source::kObs;
    if (t == 1) {
      ds.y[i] = law.y_mean[z][1];
    } else {
      ds.y[i] = flip[z] % 2 == 0 ? 1.0 : -1.0;
      ++flip[z];
    }
  }
  ds.validate();
  return ds;
}

}  // namespace fusion
