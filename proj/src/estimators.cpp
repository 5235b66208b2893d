#include "fusion/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fusion/common.hpp"
#include "fusion/discrepancy.hpp"
#include "fusion/metrics.hpp"
#include "fusion/moments.hpp"
#include "fusion/rng.hpp"

namespace fusion {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Substream tags; child seeds depend only on (seed, tag), so adding or
// removing one consumer never shifts another one's stream.
constexpr std::uint64_t kTagRepInit = 0xA1;
constexpr std::uint64_t kTagPredInit = 0xA2;
constexpr std::uint64_t kTagCriticInit = 0xA3;
constexpr std::uint64_t kTagArmInit = 0xA8;
constexpr std::uint64_t kTagBatches = 0xB1;
constexpr std::uint64_t kTagSplitRct = 0xC1;
constexpr std::uint64_t kTagSplitObs = 0xC2;
constexpr std::uint64_t kTagMmdRct = 0xE1;
constexpr std::uint64_t kTagMmdObs = 0xE2;

}  // namespace

TrainMethod train_method_from_string(const std::string& s) {
  if (s == "pd") return TrainMethod::kPd;
  if (s == "penalty") return TrainMethod::kPenalty;
  if (s == "dual_only") return TrainMethod::kDualOnly;
  if (s == "ipm_only") return TrainMethod::kIpmOnly;
  if (s == "weighted") return TrainMethod::kWeighted;
  if (s == "obs_only") return TrainMethod::kObsOnly;
  if (s == "rct_only") return TrainMethod::kRctOnly;
  if (s == "t_learner") return TrainMethod::kTLearner;
  throw ConfigError("unknown training method: " + s);
}

std::string to_string(TrainMethod m) {
  switch (m) {
    case TrainMethod::kPd: return "pd";
    case TrainMethod::kPenalty: return "penalty";
    case TrainMethod::kDualOnly: return "dual_only";
    case TrainMethod::kIpmOnly: return "ipm_only";
    case TrainMethod::kWeighted: return "weighted";
    case TrainMethod::kObsOnly: return "obs_only";
    case TrainMethod::kRctOnly: return "rct_only";
    case TrainMethod::kTLearner: return "t_learner";
  }
  throw ConfigError("unknown training method id");
}

void TrainConfig::validate() const {
  if (rho < 0.0) throw ConfigError("train: rho must be nonnegative");
  if (lambda_ov < 0.0) throw ConfigError("train: lambda_ov must be nonnegative");
  if (lambda_cap < 0.0) throw ConfigError("train: lambda_cap must be nonnegative");
  if (alpha < 0.0) throw ConfigError("train: alpha must be nonnegative");
  if (steps < 1) throw ConfigError("train: steps must be positive");
  if (batch_obs < 1 || batch_rct < 1) throw ConfigError("train: batch sizes must be positive");
  if (!(eta_primal > 0.0) || !(eta_dual > 0.0) || !(eta_critic > 0.0))
    throw ConfigError("train: step sizes must be positive");
  if (critic_steps < 0) throw ConfigError("train: critic_steps must be nonnegative");
  if (!(step_s0 > 0.0)) throw ConfigError("train: step_s0 must be positive");
  if (log_every < 1) throw ConfigError("train: log_every must be positive");
}

void TrainTrace::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open trace for writing: " + path);
  out << "step,r_obs,g_norm,eps_ov,nu_norm,objective\n";
  for (const TraceRow& r : rows) {
    out << r.step << ',' << format_double(r.r_obs) << ',' << format_double(r.g_norm) << ','
        << format_double(r.eps_ov) << ',' << format_double(r.nu_norm) << ','
        << format_double(r.objective) << '\n';
  }
}

TrainTrace TrainTrace::read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "step,r_obs,g_norm,eps_ov,nu_norm,objective")
    throw DataError("trace: unexpected header in " + path);
  TrainTrace tr;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    TraceRow r;
    char c = 0;
    if (!(ss >> r.step >> c >> r.r_obs >> c >> r.g_norm >> c >> r.eps_ov >> c >> r.nu_norm >>
          c >> r.objective))
      throw DataError("trace: malformed row in " + path);
    tr.rows.push_back(r);
  }
  return tr;
}

Split make_split(const Dataset& ds, double eval_frac, std::uint64_t seed) {
  if (!(eval_frac >= 0.0 && eval_frac < 1.0))
    throw ConfigError("make_split: eval_frac must lie in [0,1)");
  Split sp;
  auto split_source = [&](Source s, std::uint64_t tag, std::vector<int>& train,
                          std::vector<int>& eval) {
    std::vector<int> rows = ds.rows_of(s);
    Rng rng(mix_seed(seed, tag));
    std::vector<int> perm = rng.permutation(static_cast<int>(rows.size()));
    const long n_eval = std::lround(eval_frac * static_cast<double>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      int row = rows[static_cast<std::size_t>(perm[i])];
      if (static_cast<long>(i) < n_eval) eval.push_back(row);
      else train.push_back(row);
    }
    std::sort(train.begin(), train.end());
    std::sort(eval.begin(), eval.end());
  };
  split_source(Source::kRct, kTagSplitRct, sp.train_rct, sp.eval_rct);
  split_source(Source::kObs, kTagSplitObs, sp.train_obs, sp.eval_obs);
  return sp;
}

namespace {

// Effective weights and toggles for one pass of the shared SGD loop. All
// joint methods run the same code path; a disabled term contributes an exact
// zero so trajectories coincide bit for bit when configurations agree.
struct LoopFlags {
  double w_obs = 1.0;
  double w_rct_risk = 0.0;
  double rho = 0.0;
  double lambda_cap = 0.0;
  double lambda_ov = 0.0;
  bool train_critic = false;
};

LoopFlags flags_for(TrainMethod m, const TrainConfig& cfg) {
  LoopFlags f;
  switch (m) {
    case TrainMethod::kPd:
      f = {1.0, 0.0, cfg.rho, cfg.lambda_cap, cfg.lambda_ov, true};
      break;
    case TrainMethod::kDualOnly:
      f = {1.0, 0.0, cfg.rho, cfg.lambda_cap, 0.0, true};
      break;
    case TrainMethod::kPenalty:
      f = {1.0, 0.0, cfg.rho, 0.0, cfg.lambda_ov, true};
      break;
    case TrainMethod::kIpmOnly:
      f = {1.0, 0.0, 0.0, 0.0, cfg.lambda_ov, true};
      break;
    case TrainMethod::kWeighted:
      f = {1.0 / (1.0 + cfg.alpha), cfg.alpha / (1.0 + cfg.alpha), 0.0, 0.0, 0.0, false};
      break;
    case TrainMethod::kObsOnly:
      f = {1.0, 0.0, 0.0, 0.0, 0.0, false};
      break;
    case TrainMethod::kRctOnly:
      f = {0.0, 1.0, 0.0, 0.0, 0.0, false};
      break;
    case TrainMethod::kTLearner:
      throw StateError("flags_for: t_learner does not use the joint loop");
  }
  return f;
}

ModelBundle run_joint_sgd(const Dataset& ds, const Split& split, const TrainConfig& cfg,
                          TrainMethod method) {
  const LoopFlags fl = flags_for(method, cfg);
  const int arms = ds.arms();
  const int k = arms - 1;
  const int d = ds.dim();
  const int dz = cfg.use_rep ? cfg.sizes.rep_out : d;
  const long b_o = cfg.batch_obs;
  const long b_r = cfg.batch_rct;
  const long n_b = b_o + b_r;

  if (split.train_obs.empty()) throw DataError("train: no observational training rows");
  if (split.train_rct.empty()) throw DataError("train: no randomized training rows");

  ModelBundle bundle;
  bundle.method = method;
  {
    std::optional<Mlp> rep;
    if (cfg.use_rep) {
      Rng r(mix_seed(cfg.seed, kTagRepInit));
      rep.emplace(rep_layout(d, cfg.sizes), InitScheme::kScaledUniform, r);
    }
    Rng rp(mix_seed(cfg.seed, kTagPredInit));
    Mlp pred(predictor_layout(dz, arms, cfg.sizes), InitScheme::kScaledUniform, rp);
    bundle.model.emplace(std::move(rep), std::move(pred), arms);
  }
  if (fl.train_critic) {
    Rng rc(mix_seed(cfg.seed, kTagCriticInit));
    bundle.critic.emplace(critic_layout(dz, arms, cfg.sizes), InitScheme::kScaledUniform, rc);
  }
  bundle.nu = VectorXd::Zero(k);

  Rng batch_rng(mix_seed(cfg.seed, kTagBatches));
  RepPredictor& model = *bundle.model;

  MatrixXd x_b(n_b, d);
  std::vector<int> t_b(static_cast<std::size_t>(n_b));
  VectorXd y_b(n_b);
  std::vector<int> rct_global(static_cast<std::size_t>(b_r));
  MatrixXd x_rct(b_r, d);
  std::vector<int> t_rct(static_cast<std::size_t>(b_r));

  for (long s = 0; s < cfg.steps; ++s) {
    // Minibatches: obs rows first, then rct rows, drawn with replacement.
    for (long i = 0; i < b_o; ++i) {
      int row = split.train_obs[static_cast<std::size_t>(
          batch_rng.uniform_int(static_cast<int>(split.train_obs.size())))];
      x_b.row(i) = ds.x.row(row);
      t_b[static_cast<std::size_t>(i)] = ds.t[static_cast<std::size_t>(row)];
      y_b(i) = ds.y(row);
    }
    for (long i = 0; i < b_r; ++i) {
      int row = split.train_rct[static_cast<std::size_t>(
          batch_rng.uniform_int(static_cast<int>(split.train_rct.size())))];
      rct_global[static_cast<std::size_t>(i)] = row;
      x_b.row(b_o + i) = ds.x.row(row);
      t_b[static_cast<std::size_t>(b_o + i)] = ds.t[static_cast<std::size_t>(row)];
      y_b(b_o + i) = ds.y(row);
      x_rct.row(i) = ds.x.row(row);
      t_rct[static_cast<std::size_t>(i)] = ds.t[static_cast<std::size_t>(row)];
    }

    const MatrixXd feats = model.features(x_b);
    const MatrixXd& heads = model.pred.forward(feats);
    VectorXd m(n_b);
    for (long i = 0; i < n_b; ++i) m(i) = heads(i, t_b[static_cast<std::size_t>(i)]);

    double r_obs = 0.0;
    for (long i = 0; i < b_o; ++i) r_obs += (m(i) - y_b(i)) * (m(i) - y_b(i));
    r_obs /= static_cast<double>(b_o);
    double r_rct = 0.0;
    for (long i = b_o; i < n_b; ++i) r_rct += (m(i) - y_b(i)) * (m(i) - y_b(i));
    r_rct /= static_cast<double>(b_r);

    VectorXd g_hat = VectorXd::Zero(k);
    for (long i = 0; i < b_r; ++i) {
      const int row = rct_global[static_cast<std::size_t>(i)];
      const VectorXd& p = ds.probs_for_row(row);
      const double resid = y_b(b_o + i) - m(b_o + i);
      for (int arm = 1; arm < arms; ++arm) {
        const double ind = t_b[static_cast<std::size_t>(b_o + i)] == arm ? 1.0 : 0.0;
        g_hat(arm - 1) += (ind - p(arm)) * resid;
      }
    }
    g_hat /= static_cast<double>(b_r);

    // Critic ascent on detached features, then the final gap and (when the
    // penalty is active) input gradients feeding the representation.
    double eps_ov = 0.0;
    MatrixXd crit_in_rct, crit_in_obs;
    bool crit_grad_live = false;
    if (fl.train_critic) {
      Mlp& critic = *bundle.critic;
      MatrixXd f_o = joint_features(feats.topRows(b_o),
                                    {t_b.begin(), t_b.begin() + b_o}, arms);
      MatrixXd f_r = joint_features(feats.bottomRows(b_r),
                                    {t_b.begin() + b_o, t_b.end()}, arms);
      const MatrixXd up_r = MatrixXd::Constant(b_r, 1, 1.0 / static_cast<double>(b_r));
      const MatrixXd up_o = MatrixXd::Constant(b_o, 1, -1.0 / static_cast<double>(b_o));
      for (long c = 0; c < cfg.critic_steps; ++c) {
        critic.forward(f_r);
        VectorXd grad = critic.backward(up_r).param_grad;
        critic.forward(f_o);
        grad += critic.backward(up_o).param_grad;
        critic.step(grad, cfg.eta_critic);
      }
      double mean_r = critic.forward(f_r).col(0).mean();
      if (fl.lambda_ov > 0.0) {
        crit_in_rct = critic
                          .backward(MatrixXd::Constant(b_r, 1,
                                                        fl.lambda_ov / static_cast<double>(b_r)))
                          .input_grad;
      }
      double mean_o = critic.forward(f_o).col(0).mean();
      if (fl.lambda_ov > 0.0) {
        crit_in_obs = critic
                          .backward(MatrixXd::Constant(b_o, 1,
                                                        -fl.lambda_ov / static_cast<double>(b_o)))
                          .input_grad;
      }
      const double gap = mean_r - mean_o;
      eps_ov = std::max(gap, 0.0);
      crit_grad_live = fl.lambda_ov > 0.0 && gap > 0.0;
    }

    // Output-side coefficients: d(objective)/d m_i.
    MatrixXd upstream = MatrixXd::Zero(n_b, arms);
    for (long i = 0; i < b_o; ++i)
      upstream(i, t_b[static_cast<std::size_t>(i)]) =
          fl.w_obs * 2.0 * (m(i) - y_b(i)) / static_cast<double>(b_o);
    for (long i = 0; i < b_r; ++i) {
      const long bi = b_o + i;
      double coef = fl.w_rct_risk * 2.0 * (m(bi) - y_b(bi)) / static_cast<double>(b_r);
      const int row = rct_global[static_cast<std::size_t>(i)];
      const VectorXd& p = ds.probs_for_row(row);
      for (int arm = 1; arm < arms; ++arm) {
        const double ind = t_b[static_cast<std::size_t>(bi)] == arm ? 1.0 : 0.0;
        coef += (bundle.nu(arm - 1) + fl.rho * g_hat(arm - 1)) * (-(ind - p(arm))) /
                static_cast<double>(b_r);
      }
      upstream(bi, t_b[static_cast<std::size_t>(bi)]) = coef;
    }

    const Mlp::Backprop pred_bp = model.pred.backward(upstream);
    const double eta_s = cfg.eta_primal / std::sqrt(1.0 + static_cast<double>(s) / cfg.step_s0);
    if (model.has_rep()) {
      MatrixXd dz_grad = pred_bp.input_grad;
      if (crit_grad_live) {
        dz_grad.topRows(b_o) += crit_in_obs.leftCols(dz);
        dz_grad.bottomRows(b_r) += crit_in_rct.leftCols(dz);
      }
      const Mlp::Backprop rep_bp = model.rep->backward(dz_grad);
      model.pred.step(pred_bp.param_grad, -eta_s);
      model.rep->step(rep_bp.param_grad, -eta_s);
    } else {
      model.pred.step(pred_bp.param_grad, -eta_s);
    }

    // Dual ascent at the post-step iterate, same minibatch, then projection
    // onto the dual-norm ball.
    if (fl.lambda_cap > 0.0) {
      VectorXd m_new = model.m_values(x_rct, t_rct);
      VectorXd g_new = VectorXd::Zero(k);
      for (long i = 0; i < b_r; ++i) {
        const int row = rct_global[static_cast<std::size_t>(i)];
        const VectorXd& p = ds.probs_for_row(row);
        const double resid = ds.y(row) - m_new(i);
        for (int arm = 1; arm < arms; ++arm) {
          const double ind = t_rct[static_cast<std::size_t>(i)] == arm ? 1.0 : 0.0;
          g_new(arm - 1) += (ind - p(arm)) * resid;
        }
      }
      g_new /= static_cast<double>(b_r);
      bundle.nu += cfg.eta_dual * g_new;
      const double nn = bundle.nu.norm();
      if (nn > fl.lambda_cap) bundle.nu *= fl.lambda_cap / nn;
    }

    if (s % cfg.log_every == 0 || s == cfg.steps - 1) {
      TraceRow row;
      row.step = s;
      row.r_obs = r_obs;
      row.g_norm = g_hat.norm();
      row.eps_ov = eps_ov;
      row.nu_norm = bundle.nu.norm();
      row.objective = fl.w_obs * r_obs + fl.w_rct_risk * r_rct + fl.lambda_ov * eps_ov +
                      bundle.nu.dot(g_hat) + 0.5 * fl.rho * g_hat.squaredNorm();
      if (!std::isfinite(row.objective) || !std::isfinite(row.g_norm))
        throw DivergenceError("training objective became non-finite", s);
      bundle.trace.rows.push_back(row);
    }
  }
  bundle.steps_run = cfg.steps;
  return bundle;
}

Layout arm_net_layout(int d, const NetSizes& sizes) {
  Layout layout;
  int prev = d;
  for (int h : sizes.pred_hidden) {
    layout.push_back({prev, h, sizes.hidden_act});
    prev = h;
  }
  layout.push_back({prev, 1, Activation::kIdentity});
  return layout;
}

ModelBundle run_t_learner(const Dataset& ds, const Split& split, const TrainConfig& cfg) {
  const int arms = ds.arms();
  const int d = ds.dim();
  const long b = cfg.batch_obs;

  std::vector<std::vector<int>> pools(static_cast<std::size_t>(arms));
  for (int row : split.train_rct) pools[static_cast<std::size_t>(ds.t[row])].push_back(row);
  for (int row : split.train_obs) pools[static_cast<std::size_t>(ds.t[row])].push_back(row);
  for (int arm = 0; arm < arms; ++arm)
    if (pools[static_cast<std::size_t>(arm)].empty())
      throw DataError("t_learner: no training rows for arm " + std::to_string(arm));

  ModelBundle bundle;
  bundle.method = TrainMethod::kTLearner;
  bundle.nu = VectorXd::Zero(arms - 1);
  for (int arm = 0; arm < arms; ++arm) {
    Rng r(mix_seed(cfg.seed, kTagArmInit + static_cast<std::uint64_t>(arm)));
    bundle.arm_models.emplace_back(arm_net_layout(d, cfg.sizes), InitScheme::kScaledUniform, r);
  }

  Rng batch_rng(mix_seed(cfg.seed, kTagBatches));
  MatrixXd x_batch(b, d);
  VectorXd y_batch(b);

  for (long s = 0; s < cfg.steps; ++s) {
    const double eta_s = cfg.eta_primal / std::sqrt(1.0 + static_cast<double>(s) / cfg.step_s0);
    double loss_acc = 0.0;
    for (int arm = 0; arm < arms; ++arm) {
      const std::vector<int>& pool = pools[static_cast<std::size_t>(arm)];
      for (long i = 0; i < b; ++i) {
        int row = pool[static_cast<std::size_t>(
            batch_rng.uniform_int(static_cast<int>(pool.size())))];
        x_batch.row(i) = ds.x.row(row);
        y_batch(i) = ds.y(row);
      }
      Mlp& net = bundle.arm_models[static_cast<std::size_t>(arm)];
      const MatrixXd& out = net.forward(x_batch);
      MatrixXd upstream(b, 1);
      double loss = 0.0;
      for (long i = 0; i < b; ++i) {
        const double diff = out(i, 0) - y_batch(i);
        loss += diff * diff;
        upstream(i, 0) = 2.0 * diff / static_cast<double>(b);
      }
      loss /= static_cast<double>(b);
      loss_acc += loss;
      net.step(net.backward(upstream).param_grad, -eta_s);
    }

    if (s % cfg.log_every == 0 || s == cfg.steps - 1) {
      // Constraint diagnostic on a fresh randomized batch (log steps only).
      VectorXd g_hat = VectorXd::Zero(arms - 1);
      for (long i = 0; i < cfg.batch_rct; ++i) {
        int row = split.train_rct[static_cast<std::size_t>(
            batch_rng.uniform_int(static_cast<int>(split.train_rct.size())))];
        Mlp& net = bundle.arm_models[static_cast<std::size_t>(ds.t[row])];
        const double m = net.forward_one(ds.x.row(row).transpose())(0);
        const VectorXd& p = ds.probs_for_row(row);
        const double resid = ds.y(row) - m;
        for (int arm = 1; arm < arms; ++arm) {
          const double ind = ds.t[static_cast<std::size_t>(row)] == arm ? 1.0 : 0.0;
          g_hat(arm - 1) += (ind - p(arm)) * resid;
        }
      }
      g_hat /= static_cast<double>(cfg.batch_rct);
      TraceRow row;
      row.step = s;
      row.r_obs = loss_acc / static_cast<double>(arms);
      row.g_norm = g_hat.norm();
      row.eps_ov = 0.0;
      row.nu_norm = 0.0;
      row.objective = row.r_obs;
      if (!std::isfinite(row.objective) || !std::isfinite(row.g_norm))
        throw DivergenceError("training objective became non-finite", s);
      bundle.trace.rows.push_back(row);
    }
  }
  bundle.steps_run = cfg.steps;
  return bundle;
}

}  // namespace

ModelBundle train_model(const Dataset& ds, const Split& split, const TrainConfig& cfg,
                        TrainMethod method) {
  cfg.validate();
  if (method == TrainMethod::kTLearner) return run_t_learner(ds, split, cfg);
  return run_joint_sgd(ds, split, cfg, method);
}

Eigen::VectorXd ModelBundle::predict_m(const MatrixXd& x, const std::vector<int>& t) {
  if (!arm_models.empty()) {
    if (static_cast<long>(t.size()) != x.rows())
      throw DimensionError("predict_m: t length mismatch");
    VectorXd out(x.rows());
    for (std::size_t arm = 0; arm < arm_models.size(); ++arm) {
      const MatrixXd& pred = arm_models[arm].forward(x);
      for (long i = 0; i < x.rows(); ++i)
        if (t[static_cast<std::size_t>(i)] == static_cast<int>(arm)) out(i) = pred(i, 0);
    }
    return out;
  }
  if (!model) throw StateError("predict_m: empty bundle");
  return model->m_values(x, t);
}

Eigen::VectorXd ModelBundle::predict_m_rows(const Dataset& ds, const std::vector<int>& rows) {
  return predict_m(ds.x_rows(rows), ds.t_rows(rows));
}

Eigen::VectorXd ModelBundle::predict_tau(const MatrixXd& x, int arm) {
  if (!arm_models.empty()) {
    if (arm <= 0 || arm >= static_cast<int>(arm_models.size()))
      throw DataError("predict_tau: bad arm");
    VectorXd treated = arm_models[static_cast<std::size_t>(arm)].forward(x).col(0);
    VectorXd control = arm_models[0].forward(x).col(0);
    return treated - control;
  }
  if (!model) throw StateError("predict_tau: empty bundle");
  return model->tau_hat(x, arm);
}

Eigen::MatrixXd ModelBundle::features(const MatrixXd& x) {
  if (model && model->has_rep()) return model->rep->forward(x);
  return x;
}

EvalMetrics evaluate_model(ModelBundle& bundle, const Dataset& ds, const Split& split,
                           std::uint64_t seed) {
  if (split.eval_rct.empty() || split.eval_obs.empty())
    throw DataError("evaluate_model: empty evaluation split");
  EvalMetrics em;

  const MatrixXd x_er = ds.x_rows(split.eval_rct);
  const std::vector<int> t_er = ds.t_rows(split.eval_rct);
  const VectorXd y_er = ds.y_rows(split.eval_rct);
  const VectorXd m_er = bundle.predict_m(x_er, t_er);
  em.g_norm = moment_estimate(ds, split.eval_rct, m_er).norm();

  const VectorXd tau_hat = bundle.predict_tau(x_er);
  em.qini = qini_area(tau_hat, t_er, y_er);

  if (ds.tau_true.size() == ds.n()) {
    VectorXd tau_true_er(static_cast<long>(split.eval_rct.size()));
    for (std::size_t i = 0; i < split.eval_rct.size(); ++i)
      tau_true_er(static_cast<long>(i)) = ds.tau_true(split.eval_rct[i]);
    if (tau_true_er.allFinite()) {
      em.mse_tau = mse(tau_hat, tau_true_er);
      em.mape = mape_deciles(tau_hat, tau_true_er);
    } else {
      em.mse_tau = em.mape = std::numeric_limits<double>::quiet_NaN();
    }
  } else {
    em.mse_tau = em.mape = std::numeric_limits<double>::quiet_NaN();
  }

  const VectorXd y_eo = ds.y_rows(split.eval_obs);
  const VectorXd m_eo = bundle.predict_m(ds.x_rows(split.eval_obs), ds.t_rows(split.eval_obs));
  em.r_obs = mse(m_eo, y_eo);

  const std::vector<int> cap_r = subsample_rows(split.eval_rct, 2000, mix_seed(seed, kTagMmdRct));
  const std::vector<int> cap_o = subsample_rows(split.eval_obs, 2000, mix_seed(seed, kTagMmdObs));
  const MatrixXd f_r = joint_features(bundle.features(ds.x_rows(cap_r)), ds.t_rows(cap_r),
                                      ds.arms());
  const MatrixXd f_o = joint_features(bundle.features(ds.x_rows(cap_o)), ds.t_rows(cap_o),
                                      ds.arms());
  em.mmd = mmd_joint(f_r, f_o).value;

  em.marginal_tv = marginal_treatment_tv(ds, split.eval_rct, split.eval_obs).tv;
  return em;
}

std::vector<AlphaSweepRow> alpha_sweep(const Dataset& ds, const Split& split,
                                       const TrainConfig& cfg, const std::vector<double>& grid) {
  if (grid.empty() || grid.front() != 0.0)
    throw ConfigError("alpha_sweep: grid must start at zero");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (grid[i] <= grid[i - 1]) throw ConfigError("alpha_sweep: grid must be strictly ascending");

  const MatrixXd x_er = ds.x_rows(split.eval_rct);
  const std::vector<int> t_er = ds.t_rows(split.eval_rct);
  const VectorXd y_er = ds.y_rows(split.eval_rct);
  const MatrixXd x_eo = ds.x_rows(split.eval_obs);
  const std::vector<int> t_eo = ds.t_rows(split.eval_obs);
  const VectorXd y_eo = ds.y_rows(split.eval_obs);

  std::vector<AlphaSweepRow> rows;
  VectorXd m0;
  for (double alpha : grid) {
    TrainConfig c = cfg;
    c.alpha = alpha;
    ModelBundle bundle = train_model(ds, split, c, TrainMethod::kWeighted);
    const VectorXd m_er = bundle.predict_m(x_er, t_er);
    if (rows.empty()) m0 = m_er;
    AlphaSweepRow row;
    row.alpha = alpha;
    row.r_obs = mse(bundle.predict_m(x_eo, t_eo), y_eo);
    row.r_rct = mse(m_er, y_er);
    row.g_norm = moment_estimate(ds, split.eval_rct, m_er).norm();
    row.dist_m0 = std::sqrt((m_er - m0).squaredNorm() / static_cast<double>(m_er.size()));
    rows.push_back(row);
  }
  return rows;
}

void write_alpha_sweep_csv(const std::string& path, const std::vector<AlphaSweepRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open sweep output: " + path);
  out << "alpha,r_obs,r_rct,g_norm,dist_m0\n";
  for (const AlphaSweepRow& r : rows) {
    out << format_double(r.alpha) << ',' << format_double(r.r_obs) << ','
        << format_double(r.r_rct) << ',' << format_double(r.g_norm) << ','
        << format_double(r.dist_m0) << '\n';
  }
}

}  // namespace fusion
