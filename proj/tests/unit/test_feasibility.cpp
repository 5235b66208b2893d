#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include <doctest.h>
#include <json.hpp>

#include "fusion/common.hpp"
#include "fusion/datagen.hpp"
#include "fusion/feasibility.hpp"
#include "fusion/moments.hpp"
#include "fusion/rng.hpp"

using namespace fusion;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

GapConfig tiny_gap(std::uint64_t seed) {
  GapConfig cfg;
  cfg.restarts = 2;
  cfg.steps = 400;
  cfg.batch = 512;
  cfg.eta = 0.2;
  cfg.max_rows = 600;
  cfg.sizes.rep_hidden = {8};
  cfg.sizes.rep_out = 4;
  cfg.sizes.pred_hidden = {8};
  cfg.sizes.critic_hidden = {8};
  cfg.seed = seed;
  return cfg;
}

// Randomized dataset whose outcome is exactly linear in the covariates, so a
// linear per-arm predictor can drive the sample moment to zero.
Dataset linear_rct(long n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset ds;
  ds.x = MatrixXd(n, 3);
  ds.t.assign(static_cast<std::size_t>(n), 0);
  ds.y = VectorXd(n);
  ds.source.assign(static_cast<std::size_t>(n), Source::kRct);
  ds.probs.marginal = (VectorXd(2) << 0.5, 0.5).finished();
  for (long i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) ds.x(i, j) = rng.normal();
    ds.t[static_cast<std::size_t>(i)] = rng.uniform01() < 0.5 ? 1 : 0;
    ds.y(i) = 1.0 + 2.0 * ds.x(i, 0) - 0.5 * ds.x(i, 2);
  }
  return ds;
}

}  // namespace

TEST_SUITE("feasibility") {

TEST_CASE("family names round-trip") {
  for (GapFamily f : {GapFamily::kRawLinear, GapFamily::kRawNet, GapFamily::kRepNet})
    CHECK(gap_family_from_string(to_string(f)) == f);
  CHECK_THROWS_AS(gap_family_from_string("kernel"), ConfigError);
}

TEST_CASE("search config validation") {
  GapConfig cfg = tiny_gap(1);
  CHECK_NOTHROW(cfg.validate());
  cfg.restarts = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_gap(1);
  cfg.eta = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_gap(1);
  cfg.max_rows = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("finite-class gap equals the brute-force minimum") {
  const Dataset ds = linear_rct(40, 7u);
  std::vector<int> rows;
  for (int i = 0; i < 40; ++i) rows.push_back(i);

  std::vector<VectorXd> preds;
  Rng rng(8u);
  for (int k = 0; k < 5; ++k) {
    VectorXd m(40);
    for (long i = 0; i < 40; ++i) m(i) = ds.y(i) + 0.3 * k * rng.normal();
    preds.push_back(m);
  }

  // Direct recomputation of each candidate's moment norm.
  double want = std::numeric_limits<double>::infinity();
  for (const VectorXd& m : preds) {
    double acc = 0.0;
    for (long i = 0; i < 40; ++i) {
      const double d = ds.t[static_cast<std::size_t>(i)] == 1 ? 1.0 : 0.0;
      acc += (d - 0.5) * (ds.y(i) - m(i));
    }
    want = std::min(want, std::abs(acc / 40.0));
  }
  CHECK(feasibility_gap_grid(ds, rows, preds) == doctest::Approx(want).epsilon(1e-13));

  CHECK_THROWS_AS(feasibility_gap_grid(ds, rows, {}), ConfigError);
  CHECK_THROWS_AS(feasibility_gap_grid(ds, rows, {VectorXd::Zero(3)}), DimensionError);
}

TEST_CASE("explicit lower-bound constant from hand counts") {
  // Region: three randomized rows (t = 1, 0, 1) and two observational rows
  // (both t = 0), so arm 1 is structurally excluded. Two more randomized
  // rows sit outside the region.
  Dataset ds;
  ds.x = MatrixXd::Zero(7, 2);
  ds.t = {1, 0, 1, 0, 0, 1, 0};
  ds.y = VectorXd::Zero(7);
  ds.source = {Source::kRct, Source::kRct, Source::kRct, Source::kObs, Source::kObs,
               Source::kRct, Source::kRct};
  ds.probs.marginal = (VectorXd(2) << 0.7, 0.3).finished();
  ds.s_region = {1, 1, 1, 1, 1, 0, 0};
  const std::vector<int> rct_rows = {0, 1, 2, 5, 6};

  const GapConstant gc = explicit_gap_constant(ds, rct_rows, 0.5);
  REQUIRE(gc.excluded_arms == std::vector<int>{1});
  CHECK(gc.n_region == 3);
  CHECK(gc.p_min == 0.3);
  CHECK(gc.p_max == 0.3);
  CHECK(gc.p_region == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(gc.delta == 0.5);
  CHECK(gc.c0 == doctest::Approx(0.3 * 0.7 * 0.4 * 0.5).epsilon(1e-14));

  SUBCASE("validation") {
    CHECK_THROWS_AS(explicit_gap_constant(ds, rct_rows, -1.0), ConfigError);
    CHECK_THROWS_AS(explicit_gap_constant(ds, {}, 0.5), DataError);
    Dataset untagged = ds;
    untagged.s_region.clear();
    CHECK_THROWS_AS(explicit_gap_constant(untagged, rct_rows, 0.5), DataError);
    Dataset covered = ds;
    covered.t[3] = 1;  // the observational policy now reaches arm 1
    CHECK_THROWS_AS(explicit_gap_constant(covered, rct_rows, 0.5), DataError);
  }
}

TEST_CASE("outcome separation over an explicit grid") {
  Dataset ds;
  ds.x = MatrixXd::Zero(2, 1);
  ds.t = {1, 1};
  ds.y = (VectorXd(2) << 2.0, 4.0).finished();
  ds.source.assign(2, Source::kRct);
  ds.probs.marginal = (VectorXd(2) << 0.5, 0.5).finished();
  const std::vector<int> rows = {0, 1};
  const VectorXd m1 = (VectorXd(2) << 1.0, 1.0).finished();  // |mean residual| = 2
  const VectorXd m2 = (VectorXd(2) << 3.0, 5.0).finished();  // |mean residual| = 1
  CHECK(estimate_delta_grid(ds, rows, {m1, m2}) == 1.0);
  CHECK_THROWS_AS(estimate_delta_grid(ds, {}, {m1}), DataError);
  CHECK_THROWS_AS(estimate_delta_grid(ds, rows, {}), ConfigError);
  CHECK_THROWS_AS(estimate_delta_grid(ds, rows, {VectorXd::Zero(3)}), DimensionError);
}

TEST_CASE("gap search drives an exactly satisfiable instance toward zero") {
  const Dataset ds = linear_rct(400, 17u);
  std::vector<int> rows;
  for (int i = 0; i < 400; ++i) rows.push_back(i);
  GapConfig cfg = tiny_gap(3u);
  cfg.steps = 1500;

  const GapResult res = feasibility_gap(ds, rows, GapFamily::kRawLinear, cfg);
  REQUIRE(res.per_restart.size() == 2);
  CHECK(res.best_restart >= 0);
  CHECK(res.gap == *std::min_element(res.per_restart.begin(), res.per_restart.end()));
  CHECK(res.residual.norm() == res.gap);
  REQUIRE(res.model.has_value());
  CHECK(res.gap <= 0.05);

  const GapResult again = feasibility_gap(ds, rows, GapFamily::kRawLinear, cfg);
  CHECK(again.gap == res.gap);
  CHECK(again.per_restart == res.per_restart);

  SUBCASE("the reported value is the full-row moment at the best model") {
    RepPredictor best = *res.model;
    const VectorXd m = best.m_values(ds.x_rows(rows), ds.t_rows(rows));
    CHECK(moment_estimate(ds, rows, m).norm() == doctest::Approx(res.gap).epsilon(1e-12));
  }
  SUBCASE("empty row set is rejected") {
    CHECK_THROWS_AS(feasibility_gap(ds, {}, GapFamily::kRawLinear, cfg), DataError);
  }
}

TEST_CASE("information probe vanishes on identical features and fires on empty ones") {
  SyntheticConfig scfg;
  scfg.n_rct = 200;
  scfg.n_obs = 300;
  scfg.n_cont = 10;
  scfg.n_cat = 0;
  const SyntheticDataset sd = gen_synthetic(scfg, 23u);
  const Split sp = make_split(sd.data, 0.3, 24u);
  std::vector<int> train = sp.train_rct;
  train.insert(train.end(), sp.train_obs.begin(), sp.train_obs.end());
  std::vector<int> eval = sp.eval_rct;
  eval.insert(eval.end(), sp.eval_obs.begin(), sp.eval_obs.end());

  const InfoResult same = info_preservation(sd.data, sd.data.x, train, eval);
  CHECK(same.raw == 0.0);
  CHECK(same.eps_info == 0.0);
  CHECK(same.risk_feats == same.risk_raw);

  const InfoResult blank =
      info_preservation(sd.data, MatrixXd::Zero(sd.data.n(), 4), train, eval);
  CHECK(blank.eps_info > 0.0);
  CHECK(blank.risk_feats > blank.risk_raw);

  CHECK_THROWS_AS(info_preservation(sd.data, MatrixXd::Zero(3, 4), train, eval),
                  DimensionError);
  CHECK_THROWS_AS(info_preservation(sd.data, sd.data.x, {}, eval), DataError);
}

TEST_CASE("nonnegative least squares by support enumeration") {
  SUBCASE("recovers an interior nonnegative solution") {
    MatrixXd x(3, 2);
    x << 1.0, 0.0,
         0.0, 1.0,
         1.0, 1.0;
    const VectorXd w_true = (VectorXd(2) << 2.0, 3.0).finished();
    const VectorXd w = nnls_enumerate(x, x * w_true);
    CHECK(w(0) == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(w(1) == doctest::Approx(3.0).epsilon(1e-6));
  }
  SUBCASE("clamps coefficients that want to be negative") {
    MatrixXd x(2, 2);
    x << 1.0, 0.0,
         0.0, 1.0;
    const VectorXd w = nnls_enumerate(x, (VectorXd(2) << 3.0, -2.0).finished());
    CHECK(w(0) == doctest::Approx(3.0).epsilon(1e-6));
    CHECK(w(1) == 0.0);
  }
  SUBCASE("all-negative target collapses to the empty support") {
    const MatrixXd x = MatrixXd::Ones(2, 1);
    const VectorXd w = nnls_enumerate(x, (VectorXd(2) << -1.0, -1.0).finished());
    CHECK(w(0) == 0.0);
  }
  SUBCASE("validation") {
    CHECK_THROWS_AS(nnls_enumerate(MatrixXd(2, 0), VectorXd::Zero(2)), ConfigError);
    CHECK_THROWS_AS(nnls_enumerate(MatrixXd::Ones(2, 1), VectorXd::Zero(3)), DimensionError);
  }
}

TEST_CASE("tradeoff audit covers its own points after the intercept lift") {
  SyntheticConfig scfg;
  scfg.n_rct = 200;
  scfg.n_obs = 300;
  scfg.n_cont = 10;
  scfg.n_cat = 0;
  const SyntheticDataset sd = gen_synthetic(scfg, 29u);
  GapConfig cfg = tiny_gap(30u);
  cfg.steps = 120;
  cfg.max_rows = 300;

  std::vector<std::pair<std::string, MatrixXd>> reps;
  reps.emplace_back("raw", sd.data.x);
  reps.emplace_back("blank", MatrixXd::Zero(sd.data.n(), 4));
  const TradeoffAudit audit = tradeoff_audit(sd.data, reps, cfg);

  REQUIRE(audit.points.size() == 2);
  CHECK(audit.points[0].name == "raw");
  CHECK(audit.points[1].name == "blank");
  CHECK(audit.coef_const >= 0.0);
  CHECK(audit.coef_ov >= 0.0);
  CHECK(audit.coef_info >= 0.0);
  CHECK(audit.coverage == 1.0);
  for (const TradeoffPoint& pt : audit.points) {
    CHECK(pt.gap >= 0.0);
    CHECK(pt.eps_ov >= 0.0);
    CHECK(pt.eps_info >= 0.0);
    CHECK(pt.predicted + 1e-12 >= pt.gap);
  }

  CHECK_THROWS_AS(tradeoff_audit(sd.data, {reps[0]}, cfg), ConfigError);
  std::vector<std::pair<std::string, MatrixXd>> bad = reps;
  bad[1].second = MatrixXd::Zero(5, 4);
  CHECK_THROWS_AS(tradeoff_audit(sd.data, bad, cfg), DimensionError);
}

TEST_CASE("dataset-level audit on a structurally excluded instance") {
  namespace fs = std::filesystem;
  SyntheticConfig scfg;
  scfg.n_rct = 300;
  scfg.n_obs = 600;
  scfg.n_cont = 10;
  scfg.n_cat = 0;
  scfg.exclusion_frac = 0.25;
  const SyntheticDataset sd = gen_synthetic(scfg, 31u);
  GapConfig cfg = tiny_gap(32u);
  cfg.steps = 100;
  cfg.max_rows = 400;

  const FeasibilityAudit audit = run_feasibility_audit(sd.data, cfg);
  CHECK(audit.seed == 32u);
  for (double v : {audit.gap_raw_linear, audit.gap_raw_net, audit.gap_rep_net}) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
  }
  CHECK(std::isfinite(audit.c0_hat));
  CHECK(audit.c0_hat >= 0.0);
  CHECK(std::isfinite(audit.delta_hat));
  CHECK(audit.p_region > 0.0);
  CHECK(audit.p_region < 1.0);
  CHECK(audit.eps_ov >= 0.0);
  CHECK(audit.eps_info >= 0.0);

  const fs::path dir = fs::temp_directory_path() / "fusion_audit_test";
  fs::create_directories(dir);
  const std::string path = (dir / "audit.json").string();
  write_feasibility_audit_json(audit, path);
  {
    std::ifstream in(path);
    nlohmann::json j;
    in >> j;
    CHECK(j.at("gap_rep_net").get<double>() == audit.gap_rep_net);
    CHECK(j.at("c0_hat").is_number());
    CHECK(j.at("p_region").get<double>() == audit.p_region);
    CHECK(j.at("seed").get<std::uint64_t>() == 32u);
  }

  SUBCASE("no region tag serializes the bound fields as null") {
    SyntheticConfig plain = scfg;
    plain.exclusion_frac = 0.0;
    const SyntheticDataset sd2 = gen_synthetic(plain, 33u);
    GapConfig fast = cfg;
    fast.steps = 40;
    const FeasibilityAudit a2 = run_feasibility_audit(sd2.data, fast);
    CHECK(std::isnan(a2.c0_hat));
    write_feasibility_audit_json(a2, path);
    std::ifstream in(path);
    nlohmann::json j;
    in >> j;
    CHECK(j.at("c0_hat").is_null());
    CHECK(j.at("delta_hat").is_null());
  }
  fs::remove_all(dir);
}

}  // TEST_SUITE
