#include "fusion/feasibility.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "fusion/common.hpp"
#include "fusion/discrepancy.hpp"
#include "fusion/moments.hpp"
#include "fusion/rng.hpp"

namespace fusion {

using Eigen::MatrixXd;
using Eigen::VectorXd;

GapFamily gap_family_from_string(const std::string& s) {
  if (s == "raw_linear") return GapFamily::kRawLinear;
  if (s == "raw_net") return GapFamily::kRawNet;
  if (s == "rep_net") return GapFamily::kRepNet;
  throw ConfigError("unknown gap family: " + s);
}

std::string to_string(GapFamily f) {
  switch (f) {
    case GapFamily::kRawLinear: return "raw_linear";
    case GapFamily::kRawNet: return "raw_net";
    case GapFamily::kRepNet: return "rep_net";
  }
  throw ConfigError("unknown gap family id");
}

void GapConfig::validate() const {
  if (restarts < 1) throw ConfigError("gap: restarts must be positive");
  if (steps < 1) throw ConfigError("gap: steps must be positive");
  if (batch < 1) throw ConfigError("gap: batch must be positive");
  if (!(eta > 0.0) || !(step_s0 > 0.0)) throw ConfigError("gap: bad step sizes");
  if (max_rows < 2) throw ConfigError("gap: max_rows too small");
}

namespace {

constexpr std::uint64_t kTagGapRestart = 0xF0;
constexpr std::uint64_t kTagGapRows = 0xFA;
constexpr std::uint64_t kTagGapBatch = 0xFB;

RepPredictor make_family_model(GapFamily family, int d, int arms, const NetSizes& sizes,
                               Rng& rng) {
  switch (family) {
    case GapFamily::kRawLinear: {
      Mlp pred(Layout{{d, arms, Activation::kIdentity}}, InitScheme::kScaledUniform, rng);
      return RepPredictor(std::nullopt, std::move(pred), arms);
    }
    case GapFamily::kRawNet: {
      Mlp pred(predictor_layout(d, arms, sizes), InitScheme::kScaledUniform, rng);
      return RepPredictor(std::nullopt, std::move(pred), arms);
    }
    case GapFamily::kRepNet: {
      Mlp rep(rep_layout(d, sizes), InitScheme::kScaledUniform, rng);
      Mlp pred(predictor_layout(sizes.rep_out, arms, sizes), InitScheme::kScaledUniform, rng);
      return RepPredictor(std::make_optional(std::move(rep)), std::move(pred), arms);
    }
  }
  throw ConfigError("unknown gap family id");
}

VectorXd moment_on_batch(const Dataset& ds, const std::vector<int>& rows, const VectorXd& m) {
  const int arms = ds.arms();
  VectorXd g = VectorXd::Zero(arms - 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int r = rows[i];
    const VectorXd& p = ds.probs_for_row(r);
    const double resid = ds.y(r) - m(static_cast<long>(i));
    for (int arm = 1; arm < arms; ++arm) {
      const double ind = ds.t[static_cast<std::size_t>(r)] == arm ? 1.0 : 0.0;
      g(arm - 1) += (ind - p(arm)) * resid;
    }
  }
  g /= static_cast<double>(rows.size());
  return g;
}

}  // namespace

GapResult feasibility_gap(const Dataset& ds, const std::vector<int>& rct_rows,
                          GapFamily family, const GapConfig& cfg) {
  cfg.validate();
  if (rct_rows.empty()) throw DataError("feasibility_gap: empty row set");
  const int arms = ds.arms();
  const int d = ds.dim();

  const std::vector<int> rows =
      subsample_rows(rct_rows, cfg.max_rows, mix_seed(cfg.seed, kTagGapRows));
  const MatrixXd x_all = ds.x_rows(rows);
  const std::vector<int> t_all = ds.t_rows(rows);
  const long n = static_cast<long>(rows.size());
  const long b = std::min<long>(cfg.batch, n);

  GapResult result;
  result.gap = std::numeric_limits<double>::infinity();

  for (int restart = 0; restart < cfg.restarts; ++restart) {
    Rng init_rng(mix_seed(cfg.seed, kTagGapRestart, static_cast<std::uint64_t>(restart)));
    RepPredictor model = make_family_model(family, d, arms, cfg.sizes, init_rng);
    Rng batch_rng(mix_seed(cfg.seed, kTagGapBatch, static_cast<std::uint64_t>(restart)));

    MatrixXd x_b(b, d);
    std::vector<int> t_b(static_cast<std::size_t>(b));
    std::vector<int> row_b(static_cast<std::size_t>(b));
    for (long s = 0; s < cfg.steps; ++s) {
      if (b == n) {
        x_b = x_all;
        t_b = t_all;
        row_b = rows;
      } else {
        for (long i = 0; i < b; ++i) {
          const int j = batch_rng.uniform_int(static_cast<int>(n));
          x_b.row(i) = x_all.row(j);
          t_b[static_cast<std::size_t>(i)] = t_all[static_cast<std::size_t>(j)];
          row_b[static_cast<std::size_t>(i)] = rows[static_cast<std::size_t>(j)];
        }
      }
      const VectorXd m = model.m_values(x_b, t_b);
      const VectorXd g = moment_on_batch(ds, row_b, m);
      // d ||g||^2 / d m_i = 2 sum_k g_k * (-(D_ik - p_k)) / b
      VectorXd coef(b);
      for (long i = 0; i < b; ++i) {
        const VectorXd& p = ds.probs_for_row(row_b[static_cast<std::size_t>(i)]);
        double c = 0.0;
        for (int arm = 1; arm < arms; ++arm) {
          const double ind = t_b[static_cast<std::size_t>(i)] == arm ? 1.0 : 0.0;
          c += 2.0 * g(arm - 1) * (-(ind - p(arm)));
        }
        coef(i) = c / static_cast<double>(b);
      }
      const VectorXd grad = model.m_grad(x_b, t_b, coef);
      const double eta_s = cfg.eta / std::sqrt(1.0 + static_cast<double>(s) / cfg.step_s0);
      model.step(grad, -eta_s);
      if (!grad.allFinite()) throw DivergenceError("feasibility gap search diverged", s);
    }

    const VectorXd m_full = model.m_values(x_all, t_all);
    const VectorXd g_full = moment_on_batch(ds, rows, m_full);
    const double val = g_full.norm();
    result.per_restart.push_back(val);
    if (val < result.gap) {
      result.gap = val;
      result.residual = g_full;
      result.best_restart = restart;
      result.model.emplace(model);
    }
  }
  return result;
}

double feasibility_gap_grid(const Dataset& ds, const std::vector<int>& rows,
                            const std::vector<VectorXd>& preds) {
  if (preds.empty()) throw ConfigError("feasibility_gap_grid: empty model grid");
  double best = std::numeric_limits<double>::infinity();
  for (const VectorXd& m : preds) {
    if (m.size() != static_cast<long>(rows.size()))
      throw DimensionError("feasibility_gap_grid: prediction length mismatch");
    best = std::min(best, moment_estimate(ds, rows, m).norm());
  }
  return best;
}

GapConstant explicit_gap_constant(const Dataset& ds, const std::vector<int>& rct_rows,
                                  double delta) {
  if (delta < 0.0) throw ConfigError("explicit_gap_constant: delta must be nonnegative");
  if (ds.s_region.empty()) throw DataError("explicit_gap_constant: dataset has no region tag");
  if (rct_rows.empty()) throw DataError("explicit_gap_constant: empty randomized row set");
  const int arms = ds.arms();

  // Excluded arms: present among randomized region rows, absent among
  // observational region rows.
  std::vector<long> rct_count(static_cast<std::size_t>(arms), 0);
  std::vector<long> obs_count(static_cast<std::size_t>(arms), 0);
  for (long i = 0; i < ds.n(); ++i) {
    if (!ds.s_region[static_cast<std::size_t>(i)]) continue;
    if (ds.source[static_cast<std::size_t>(i)] == Source::kObs)
      ++obs_count[static_cast<std::size_t>(ds.t[static_cast<std::size_t>(i)])];
  }
  for (int r : rct_rows)
    if (ds.s_region[static_cast<std::size_t>(r)])
      ++rct_count[static_cast<std::size_t>(ds.t[static_cast<std::size_t>(r)])];

  GapConstant out;
  out.delta = delta;
  for (int arm = 0; arm < arms; ++arm) {
    if (rct_count[static_cast<std::size_t>(arm)] > 0 &&
        obs_count[static_cast<std::size_t>(arm)] == 0)
      out.excluded_arms.push_back(arm);
  }
  if (out.excluded_arms.empty())
    throw DataError("explicit_gap_constant: no structurally excluded arm in the region");

  out.p_min = 1.0;
  out.p_max = 0.0;
  long in_s = 0;
  for (int r : rct_rows) {
    if (!ds.s_region[static_cast<std::size_t>(r)]) continue;
    ++out.n_region;
    const VectorXd& p = ds.probs_for_row(r);
    for (int arm : out.excluded_arms) {
      out.p_min = std::min(out.p_min, p(arm));
      out.p_max = std::max(out.p_max, p(arm));
    }
    const int t = ds.t[static_cast<std::size_t>(r)];
    if (std::find(out.excluded_arms.begin(), out.excluded_arms.end(), t) !=
        out.excluded_arms.end())
      ++in_s;
  }
  out.p_region = static_cast<double>(in_s) / static_cast<double>(rct_rows.size());
  out.c0 = out.p_min * (1.0 - out.p_max) * out.p_region * out.delta;
  return out;
}

double estimate_delta_grid(const Dataset& ds, const std::vector<int>& region_rows,
                           const std::vector<VectorXd>& preds) {
  if (region_rows.empty()) throw DataError("estimate_delta_grid: empty region");
  if (preds.empty()) throw ConfigError("estimate_delta_grid: empty model grid");
  double best = std::numeric_limits<double>::infinity();
  for (const VectorXd& m : preds) {
    if (m.size() != static_cast<long>(region_rows.size()))
      throw DimensionError("estimate_delta_grid: prediction length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < region_rows.size(); ++i)
      acc += ds.y(region_rows[i]) - m(static_cast<long>(i));
    best = std::min(best, std::abs(acc / static_cast<double>(region_rows.size())));
  }
  return best;
}

namespace {

// Held-out risk of per-arm ridge fits on the given features.
double ridge_risk(const Dataset& ds, const MatrixXd& feats, const std::vector<int>& train_rows,
                  const std::vector<int>& eval_rows) {
  const int arms = ds.arms();
  const long p = feats.cols() + 1;  // intercept column
  std::vector<VectorXd> w(static_cast<std::size_t>(arms));

  for (int arm = 0; arm < arms; ++arm) {
    std::vector<int> rows;
    for (int r : train_rows)
      if (ds.t[static_cast<std::size_t>(r)] == arm) rows.push_back(r);
    if (rows.empty()) throw DataError("info probe: a training arm is empty");
    MatrixXd f(static_cast<long>(rows.size()), p);
    VectorXd y(static_cast<long>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      f.row(static_cast<long>(i)).head(feats.cols()) = feats.row(rows[i]);
      f(static_cast<long>(i), p - 1) = 1.0;
      y(static_cast<long>(i)) = ds.y(rows[i]);
    }
    const double lam = 1e-3 * static_cast<double>(rows.size());
    MatrixXd gram = f.transpose() * f + lam * MatrixXd::Identity(p, p);
    w[static_cast<std::size_t>(arm)] = gram.ldlt().solve(f.transpose() * y);
  }

  double acc = 0.0;
  for (int r : eval_rows) {
    VectorXd f(p);
    f.head(feats.cols()) = feats.row(r);
    f(p - 1) = 1.0;
    const double pred = f.dot(w[static_cast<std::size_t>(ds.t[static_cast<std::size_t>(r)])]);
    acc += (pred - ds.y(r)) * (pred - ds.y(r));
  }
  return acc / static_cast<double>(eval_rows.size());
}

}  // namespace

InfoResult info_preservation(const Dataset& ds, const MatrixXd& feats,
                             const std::vector<int>& train_rows,
                             const std::vector<int>& eval_rows) {
  if (feats.rows() != ds.n()) throw DimensionError("info_preservation: feature rows != dataset");
  if (train_rows.empty() || eval_rows.empty())
    throw DataError("info_preservation: empty split");
  InfoResult res;
  res.risk_feats = ridge_risk(ds, feats, train_rows, eval_rows);
  res.risk_raw = ridge_risk(ds, ds.x, train_rows, eval_rows);
  res.raw = res.risk_feats - res.risk_raw;
  res.eps_info = std::max(0.0, res.raw);
  return res;
}

Eigen::VectorXd nnls_enumerate(const MatrixXd& x, const VectorXd& y) {
  const int p = static_cast<int>(x.cols());
  if (p < 1 || p > 20) throw ConfigError("nnls_enumerate: column count out of range");
  if (x.rows() != y.size()) throw DimensionError("nnls_enumerate: shape mismatch");

  VectorXd best = VectorXd::Zero(p);
  double best_sse = y.squaredNorm();  // empty support
  for (unsigned mask = 1; mask < (1u << p); ++mask) {
    std::vector<int> cols;
    for (int j = 0; j < p; ++j)
      if (mask & (1u << j)) cols.push_back(j);
    MatrixXd xs(x.rows(), static_cast<long>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) xs.col(static_cast<long>(j)) = x.col(cols[j]);
    // Tiny ridge keeps collinear supports solvable; the distortion is far
    // below the comparison tolerances used downstream.
    MatrixXd gram = xs.transpose() * xs +
                    1e-12 * MatrixXd::Identity(static_cast<long>(cols.size()),
                                               static_cast<long>(cols.size()));
    VectorXd ws = gram.ldlt().solve(xs.transpose() * y);
    if ((ws.array() < 0.0).any()) continue;
    const double sse = (xs * ws - y).squaredNorm();
    if (sse < best_sse - 1e-15) {
      best_sse = sse;
      best = VectorXd::Zero(p);
      for (std::size_t j = 0; j < cols.size(); ++j) best(cols[j]) = ws(static_cast<long>(j));
    }
  }
  return best;
}

TradeoffAudit tradeoff_audit(const Dataset& ds,
                             const std::vector<std::pair<std::string, MatrixXd>>& reps,
                             const GapConfig& cfg) {
  if (reps.size() < 2) throw ConfigError("tradeoff_audit: need at least two representations");
  const Split split = make_split(ds, 0.2, cfg.seed);
  std::vector<int> train_all = split.train_rct;
  train_all.insert(train_all.end(), split.train_obs.begin(), split.train_obs.end());
  std::vector<int> eval_all = split.eval_rct;
  eval_all.insert(eval_all.end(), split.eval_obs.begin(), split.eval_obs.end());

  const std::vector<int> cap_r =
      subsample_rows(split.eval_rct, cfg.max_rows, mix_seed(cfg.seed, 0xD1));
  const std::vector<int> cap_o =
      subsample_rows(split.eval_obs, cfg.max_rows, mix_seed(cfg.seed, 0xD2));

  TradeoffAudit audit;
  for (const auto& [name, feats] : reps) {
    if (feats.rows() != ds.n()) throw DimensionError("tradeoff_audit: feature rows != dataset");
    TradeoffPoint pt;
    pt.name = name;

    MatrixXd f_r(static_cast<long>(cap_r.size()), feats.cols());
    for (std::size_t i = 0; i < cap_r.size(); ++i)
      f_r.row(static_cast<long>(i)) = feats.row(cap_r[i]);
    MatrixXd f_o(static_cast<long>(cap_o.size()), feats.cols());
    for (std::size_t i = 0; i < cap_o.size(); ++i)
      f_o.row(static_cast<long>(i)) = feats.row(cap_o[i]);
    pt.eps_ov = mmd_joint(joint_features(f_r, ds.t_rows(cap_r), ds.arms()),
                          joint_features(f_o, ds.t_rows(cap_o), ds.arms()))
                    .value;

    pt.eps_info = info_preservation(ds, feats, train_all, eval_all).eps_info;

    // Feasibility over predictors reading these fixed features: run the raw
    // family on a view whose covariates are the features themselves.
    Dataset view = ds;
    view.x = feats;
    pt.gap = feasibility_gap(view, split.train_rct, GapFamily::kRawNet, cfg).gap;
    audit.points.push_back(std::move(pt));
  }

  const long n = static_cast<long>(audit.points.size());
  MatrixXd design(n, 3);
  VectorXd target(n);
  for (long i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    design(i, 1) = audit.points[static_cast<std::size_t>(i)].eps_ov;
    design(i, 2) = audit.points[static_cast<std::size_t>(i)].eps_info;
    target(i) = audit.points[static_cast<std::size_t>(i)].gap;
  }
  VectorXd coef = nnls_enumerate(design, target);
  audit.coef_const = coef(0);
  audit.coef_ov = coef(1);
  audit.coef_info = coef(2);

  VectorXd pred = design * coef;
  VectorXd resid = target - pred;
  std::vector<double> sorted(resid.data(), resid.data() + n);
  std::sort(sorted.begin(), sorted.end());
  const long need = static_cast<long>(std::ceil(0.9 * static_cast<double>(n)));
  const double kth = sorted[static_cast<std::size_t>(std::min(n - 1, need - 1))];
  audit.intercept_lift = std::max(0.0, kth);
  audit.coef_const += audit.intercept_lift;

  long covered = 0;
  for (long i = 0; i < n; ++i) {
    const double p = pred(i) + audit.intercept_lift;
    audit.points[static_cast<std::size_t>(i)].predicted = p;
    if (p + 1e-12 >= target(i)) ++covered;
  }
  audit.coverage = static_cast<double>(covered) / static_cast<double>(n);
  return audit;
}

FeasibilityAudit run_feasibility_audit(const Dataset& ds, const GapConfig& cfg) {
  cfg.validate();
  FeasibilityAudit audit;
  audit.seed = cfg.seed;
  const std::vector<int> rct_rows = ds.rows_of(Source::kRct);
  const std::vector<int> obs_rows = ds.rows_of(Source::kObs);
  if (rct_rows.empty() || obs_rows.empty())
    throw DataError("feasibility audit: need both sources");

  audit.gap_raw_linear = feasibility_gap(ds, rct_rows, GapFamily::kRawLinear, cfg).gap;
  audit.gap_raw_net = feasibility_gap(ds, rct_rows, GapFamily::kRawNet, cfg).gap;
  GapResult rep_res = feasibility_gap(ds, rct_rows, GapFamily::kRepNet, cfg);
  audit.gap_rep_net = rep_res.gap;

  // Overlap and information diagnostics at the searched representation.
  RepPredictor& probe = *rep_res.model;
  MatrixXd feats(ds.n(), cfg.sizes.rep_out);
  {
    // Chunked forward keeps the probe's activation cache bounded.
    const long chunk = 4096;
    for (long off = 0; off < ds.n(); off += chunk) {
      const long len = std::min(chunk, ds.n() - off);
      feats.middleRows(off, len) = probe.rep->forward(ds.x.middleRows(off, len));
    }
  }
  const std::vector<int> cap_r = subsample_rows(rct_rows, cfg.max_rows, mix_seed(cfg.seed, 0xD3));
  const std::vector<int> cap_o = subsample_rows(obs_rows, cfg.max_rows, mix_seed(cfg.seed, 0xD4));
  MatrixXd f_r(static_cast<long>(cap_r.size()), feats.cols());
  for (std::size_t i = 0; i < cap_r.size(); ++i) f_r.row(static_cast<long>(i)) = feats.row(cap_r[i]);
  MatrixXd f_o(static_cast<long>(cap_o.size()), feats.cols());
  for (std::size_t i = 0; i < cap_o.size(); ++i) f_o.row(static_cast<long>(i)) = feats.row(cap_o[i]);
  audit.eps_ov = mmd_joint(joint_features(f_r, ds.t_rows(cap_r), ds.arms()),
                           joint_features(f_o, ds.t_rows(cap_o), ds.arms()))
                     .value;

  const Split split = make_split(ds, 0.2, cfg.seed);
  std::vector<int> train_all = split.train_rct;
  train_all.insert(train_all.end(), split.train_obs.begin(), split.train_obs.end());
  std::vector<int> eval_all = split.eval_rct;
  eval_all.insert(eval_all.end(), split.eval_obs.begin(), split.eval_obs.end());
  audit.eps_info = info_preservation(ds, feats, train_all, eval_all).eps_info;

  audit.c0_hat = std::numeric_limits<double>::quiet_NaN();
  audit.delta_hat = std::numeric_limits<double>::quiet_NaN();
  if (!ds.s_region.empty()) {
    try {
      // First pass identifies the excluded arms; the separation estimate then
      // conditions on the full event (region AND excluded arm).
      GapConstant arms_only = explicit_gap_constant(ds, rct_rows, 0.0);
      std::vector<int> s_rows;
      for (int r : rct_rows) {
        if (!ds.s_region[static_cast<std::size_t>(r)]) continue;
        const int t = ds.t[static_cast<std::size_t>(r)];
        if (std::find(arms_only.excluded_arms.begin(), arms_only.excluded_arms.end(), t) !=
            arms_only.excluded_arms.end())
          s_rows.push_back(r);
      }
      if (!s_rows.empty()) {
        // Outcome separation over a seeded grid of linear models.
        std::vector<VectorXd> preds;
        const MatrixXd x_s = ds.x_rows(s_rows);
        const std::vector<int> t_s = ds.t_rows(s_rows);
        for (int i = 0; i < 50; ++i) {
          Rng rng(mix_seed(cfg.seed, 0xDD, static_cast<std::uint64_t>(i)));
          RepPredictor m = make_family_model(GapFamily::kRawLinear, ds.dim(), ds.arms(),
                                             cfg.sizes, rng);
          preds.push_back(m.m_values(x_s, t_s));
        }
        audit.delta_hat = estimate_delta_grid(ds, s_rows, preds);
        GapConstant gc = explicit_gap_constant(ds, rct_rows, audit.delta_hat);
        audit.c0_hat = gc.c0;
        audit.p_region = gc.p_region;
      }
    } catch (const DataError& e) {
      // Region tag present but no arm is structurally excluded.
      log_info(std::string("feasibility audit: ") + e.what());
    }
  }
  return audit;
}

void write_feasibility_audit_json(const FeasibilityAudit& audit, const std::string& path) {
  nlohmann::json j;
  j["gap_raw_linear"] = audit.gap_raw_linear;
  j["gap_raw_net"] = audit.gap_raw_net;
  j["gap_rep_net"] = audit.gap_rep_net;
  if (std::isfinite(audit.c0_hat)) {
    j["c0_hat"] = audit.c0_hat;
    j["delta_hat"] = audit.delta_hat;
    j["p_region"] = audit.p_region;
  } else {
    j["c0_hat"] = nullptr;
    j["delta_hat"] = nullptr;
    j["p_region"] = nullptr;
  }
  j["eps_ov"] = audit.eps_ov;
  j["eps_info"] = audit.eps_info;
  j["seed"] = audit.seed;
  std::ofstream out(path);
  if (!out) throw IoError("cannot open audit output: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace fusion
