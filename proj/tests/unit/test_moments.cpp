#include <cmath>
#include <vector>

#include <doctest.h>

#include "fusion/common.hpp"
#include "fusion/datagen.hpp"
#include "fusion/moments.hpp"

using namespace fusion;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Minimal randomized dataset: every row from the randomized source, marginal
// design probabilities, covariates irrelevant to the moment machinery.
Dataset tiny_rct(const std::vector<int>& t, const std::vector<double>& y,
                 const std::vector<double>& probs) {
  Dataset ds;
  const long n = static_cast<long>(t.size());
  ds.x = MatrixXd::Zero(n, 2);
  ds.t = t;
  ds.y = Eigen::Map<const VectorXd>(y.data(), n);
  ds.source.assign(t.size(), Source::kRct);
  ds.probs.marginal = Eigen::Map<const VectorXd>(probs.data(), static_cast<long>(probs.size()));
  return ds;
}

}  // namespace

TEST_SUITE("moments") {

TEST_CASE("contributions match hand-computed values, two arms") {
  Dataset ds = tiny_rct({1, 0, 1}, {2.0, 1.0, -1.0}, {0.6, 0.4});
  VectorXd m(3);
  m << 0.5, 0.2, 0.1;
  const MatrixXd psi = moment_contributions(ds, {0, 1, 2}, m);
  REQUIRE(psi.rows() == 3);
  REQUIRE(psi.cols() == 1);
  // (D - p1) * (y - m) per row.
  CHECK(psi(0, 0) == doctest::Approx((1.0 - 0.4) * (2.0 - 0.5)).epsilon(1e-15));   // 0.9
  CHECK(psi(1, 0) == doctest::Approx((0.0 - 0.4) * (1.0 - 0.2)).epsilon(1e-15));   // -0.32
  CHECK(psi(2, 0) == doctest::Approx((1.0 - 0.4) * (-1.0 - 0.1)).epsilon(1e-15));  // -0.66
  const VectorXd g = moment_estimate(ds, {0, 1, 2}, m);
  CHECK(g(0) == doctest::Approx(-0.08 / 3.0).epsilon(1e-13));
}

TEST_CASE("contributions match hand-computed values, three arms") {
  Dataset ds = tiny_rct({2, 0}, {1.0, -0.5}, {0.5, 0.3, 0.2});
  VectorXd m(2);
  m << 0.25, 0.5;
  const MatrixXd psi = moment_contributions(ds, {0, 1}, m);
  REQUIRE(psi.cols() == 2);
  CHECK(psi(0, 0) == doctest::Approx((0.0 - 0.3) * 0.75).epsilon(1e-15));
  CHECK(psi(0, 1) == doctest::Approx((1.0 - 0.2) * 0.75).epsilon(1e-15));
  CHECK(psi(1, 0) == doctest::Approx((0.0 - 0.3) * -1.0).epsilon(1e-15));
  CHECK(psi(1, 1) == doctest::Approx((0.0 - 0.2) * -1.0).epsilon(1e-15));
}

TEST_CASE("row subsets and alignment of m with rows") {
  Dataset ds = tiny_rct({1, 0, 1, 0}, {2.0, 1.0, -1.0, 3.0}, {0.6, 0.4});
  VectorXd m(2);
  m << 0.1, 0.2;
  const MatrixXd psi = moment_contributions(ds, {2, 1}, m);
  CHECK(psi(0, 0) == doctest::Approx((1.0 - 0.4) * (-1.0 - 0.1)).epsilon(1e-15));
  CHECK(psi(1, 0) == doctest::Approx((0.0 - 0.4) * (1.0 - 0.2)).epsilon(1e-15));
}

TEST_CASE("per-stratum designs resolve through the stratum id") {
  Dataset ds = tiny_rct({1, 1}, {1.0, 1.0}, {0.5, 0.5});
  VectorXd p0(2), p1(2);
  p0 << 0.8, 0.2;
  p1 << 0.3, 0.7;
  ds.probs.per_stratum = {p0, p1};
  ds.strata = {1, 0};
  VectorXd m = VectorXd::Zero(2);
  const MatrixXd psi = moment_contributions(ds, {0, 1}, m);
  CHECK(psi(0, 0) == doctest::Approx((1.0 - 0.7) * 1.0).epsilon(1e-15));
  CHECK(psi(1, 0) == doctest::Approx((1.0 - 0.2) * 1.0).epsilon(1e-15));
}

TEST_CASE("input validation") {
  Dataset ds = tiny_rct({1, 0}, {1.0, 2.0}, {0.6, 0.4});
  VectorXd m = VectorXd::Zero(2);

  SUBCASE("single-arm design is rejected") {
    Dataset one = tiny_rct({0, 0}, {1.0, 2.0}, {1.0});
    CHECK_THROWS_AS(moment_contributions(one, {0, 1}, m), DataError);
  }
  SUBCASE("prediction length must match rows") {
    VectorXd bad = VectorXd::Zero(3);
    CHECK_THROWS_AS(moment_contributions(ds, {0, 1}, bad), DimensionError);
  }
  SUBCASE("row index out of range") {
    CHECK_THROWS_AS(moment_contributions(ds, {0, 2}, m), DimensionError);
    VectorXd one = VectorXd::Zero(2);
    CHECK_THROWS_AS(moment_contributions(ds, {-1, 0}, one), DimensionError);
  }
  SUBCASE("rows without known assignment probabilities are rejected") {
    ds.source[1] = Source::kObs;
    CHECK_THROWS_AS(moment_contributions(ds, {0, 1}, m), DataError);
    VectorXd u(2);
    u << 1.0, 2.0;
    CHECK_THROWS_AS(invariance_report(ds, {0, 1}, u), DataError);
  }
  SUBCASE("empty row set") {
    VectorXd none;
    CHECK_THROWS_AS(moment_estimate(ds, {}, none), DataError);
  }
}

TEST_CASE("invariance report matches a direct recomputation") {
  Dataset ds = tiny_rct({1, 0, 1, 1, 0, 0}, {0, 0, 0, 0, 0, 0}, {0.6, 0.4});
  VectorXd u(6);
  u << 0.3, -1.2, 0.7, 2.0, -0.4, 1.1;
  const InvarianceReport rep = invariance_report(ds, {0, 1, 2, 3, 4, 5}, u);
  REQUIRE(rep.mean.size() == 1);

  const std::vector<int> t = {1, 0, 1, 1, 0, 0};
  double mean = 0.0;
  std::vector<double> w(6);
  for (int i = 0; i < 6; ++i) {
    w[static_cast<std::size_t>(i)] = ((t[static_cast<std::size_t>(i)] == 1 ? 1.0 : 0.0) - 0.4) * u(i);
    mean += w[static_cast<std::size_t>(i)];
  }
  mean /= 6.0;
  double var = 0.0;
  for (double v : w) var += (v - mean) * (v - mean);
  var /= 5.0;
  const double se = std::sqrt(var / 6.0);
  CHECK(rep.mean(0) == doctest::Approx(mean).epsilon(1e-13));
  CHECK(rep.se(0) == doctest::Approx(se).epsilon(1e-13));
  CHECK(rep.z(0) == doctest::Approx(mean / se).epsilon(1e-13));
}

TEST_CASE("invariance report with three arms recomputes per column") {
  Dataset ds = tiny_rct({2, 0, 1, 2}, {0, 0, 0, 0}, {0.5, 0.3, 0.2});
  VectorXd u(4);
  u << 1.0, -2.0, 0.5, 0.25;
  const InvarianceReport rep = invariance_report(ds, {0, 1, 2, 3}, u);
  REQUIRE(rep.mean.size() == 2);
  const std::vector<int> t = {2, 0, 1, 2};
  const double p[3] = {0.5, 0.3, 0.2};
  for (int arm = 1; arm <= 2; ++arm) {
    double mean = 0.0;
    std::vector<double> w(4);
    for (int i = 0; i < 4; ++i) {
      w[static_cast<std::size_t>(i)] =
          ((t[static_cast<std::size_t>(i)] == arm ? 1.0 : 0.0) - p[arm]) * u(i);
      mean += w[static_cast<std::size_t>(i)];
    }
    mean /= 4.0;
    double var = 0.0;
    for (double v : w) var += (v - mean) * (v - mean);
    var /= 3.0;
    const double se = std::sqrt(var / 4.0);
    CHECK(rep.mean(arm - 1) == doctest::Approx(mean).epsilon(1e-13));
    CHECK(rep.se(arm - 1) == doctest::Approx(se).epsilon(1e-13));
    CHECK(rep.z(arm - 1) == doctest::Approx(mean / se).epsilon(1e-13));
  }
}

TEST_CASE("invariance report degenerate spread") {
  SUBCASE("zero mean and zero spread gives z = 0") {
    Dataset ds = tiny_rct({1, 1, 1}, {0, 0, 0}, {0.6, 0.4});
    VectorXd u = VectorXd::Zero(3);
    const InvarianceReport rep = invariance_report(ds, {0, 1, 2}, u);
    CHECK(rep.se(0) == 0.0);
    CHECK(rep.z(0) == 0.0);
  }
  SUBCASE("nonzero mean with zero spread gives signed infinity") {
    Dataset ds = tiny_rct({1, 1, 1}, {0, 0, 0}, {0.6, 0.4});
    VectorXd u = VectorXd::Constant(3, 2.0);
    const InvarianceReport pos = invariance_report(ds, {0, 1, 2}, u);
    CHECK(std::isinf(pos.z(0)));
    CHECK(pos.z(0) > 0.0);
    const InvarianceReport neg = invariance_report(ds, {0, 1, 2}, VectorXd(-u));
    CHECK(std::isinf(neg.z(0)));
    CHECK(neg.z(0) < 0.0);
  }
  SUBCASE("fewer than two rows is rejected") {
    Dataset ds = tiny_rct({1, 0}, {0, 0}, {0.6, 0.4});
    VectorXd u = VectorXd::Ones(1);
    CHECK_THROWS_AS(invariance_report(ds, {0}, u), DataError);
  }
  SUBCASE("u length must match rows") {
    Dataset ds = tiny_rct({1, 0}, {0, 0}, {0.6, 0.4});
    VectorXd u = VectorXd::Ones(3);
    CHECK_THROWS_AS(invariance_report(ds, {0, 1}, u), DimensionError);
  }
}

TEST_CASE("decomposition gap vanishes whenever y is consistent with y_all") {
  // The identity is algebraic in u and h: for y(i) == y_all(i, t_i) both
  // sides reduce to y - u - h_t, so arbitrary u and h must give gap ~ 0.
  const long n = 5;
  const int arms = 3;
  MatrixXd y_all(n, arms);
  y_all << 1.0, 2.0, -0.5,
           0.3, -1.1, 0.8,
           -2.0, 0.4, 1.6,
           0.9, 0.9, 0.9,
           -0.1, 3.2, -2.7;
  VectorXd u(n);
  u << 0.5, -0.3, 1.7, 0.0, -2.1;
  MatrixXd h(n, arms - 1);
  h << 0.2, -0.4,
       1.0, 0.6,
       -0.7, 0.1,
       0.0, 2.5,
       -1.3, 0.9;
  const std::vector<int> t = {2, 0, 1, 2, 0};
  VectorXd y(n);
  for (long i = 0; i < n; ++i) y(i) = y_all(i, t[static_cast<std::size_t>(i)]);
  CHECK(decomposition_max_gap(y, t, y_all, u, h) <= 1e-12);

  SUBCASE("perturbing a realized outcome shows up as exactly that gap") {
    VectorXd y2 = y;
    y2(3) += 0.5;
    CHECK(decomposition_max_gap(y2, t, y_all, u, h) == doctest::Approx(0.5).epsilon(1e-9));
    VectorXd y3 = y;
    y3(1) -= 0.25;  // control row
    CHECK(decomposition_max_gap(y3, t, y_all, u, h) == doctest::Approx(0.25).epsilon(1e-9));
  }
  SUBCASE("perturbing h leaves the identity intact") {
    MatrixXd h2 = h;
    h2(2, 0) += 10.0;
    CHECK(decomposition_max_gap(y, t, y_all, u, h2) <= 1e-12);
  }
  SUBCASE("arm out of range") {
    std::vector<int> bad = t;
    bad[0] = 3;
    CHECK_THROWS_AS(decomposition_max_gap(y, bad, y_all, u, h), DataError);
  }
  SUBCASE("shape mismatches") {
    CHECK_THROWS_AS(decomposition_max_gap(y, t, y_all, VectorXd::Zero(n + 1), h), DimensionError);
    CHECK_THROWS_AS(decomposition_max_gap(y, t, y_all, u, MatrixXd::Zero(n, arms)), DimensionError);
    std::vector<int> shorter(t.begin(), t.end() - 1);
    CHECK_THROWS_AS(decomposition_max_gap(y, shorter, y_all, u, h), DimensionError);
  }
}

TEST_CASE("randomized draws keep baseline shifts mean-zero and the truth feasible") {
  SyntheticConfig cfg;
  cfg.n_rct = 20000;
  cfg.n_obs = 100;
  cfg.n_cont = 12;
  cfg.n_cat = 2;
  cfg.n_levels = 3;
  const SyntheticDataset sd = gen_synthetic(cfg, 913u);
  const Dataset& ds = sd.data;
  const std::vector<int> rct = ds.rows_of(Source::kRct);
  const long n = static_cast<long>(rct.size());
  REQUIRE(n == cfg.n_rct);

  SUBCASE("arbitrary covariate shifts have small z-scores") {
    VectorXd u(n);
    for (long i = 0; i < n; ++i) {
      const int r = rct[static_cast<std::size_t>(i)];
      u(i) = std::tanh(ds.x(r, 0)) + 0.5 * ds.x(r, 2) - 0.2 * ds.x(r, 5) * ds.x(r, 5);
    }
    const InvarianceReport rep = invariance_report(ds, rct, u);
    CHECK(std::abs(rep.z(0)) <= 4.5);
  }
  SUBCASE("moments evaluated at the true outcome function are near zero") {
    const VectorXd mu0 = true_mu0(sd);
    const VectorXd tau = true_tau(sd);
    VectorXd m(n);
    for (long i = 0; i < n; ++i) {
      const int r = rct[static_cast<std::size_t>(i)];
      m(i) = mu0(r) + (ds.t[static_cast<std::size_t>(r)] == 1 ? tau(r) : 0.0);
    }
    const MatrixXd psi = moment_contributions(ds, rct, m);
    const VectorXd g = moment_estimate(ds, rct, m);
    double max_sd = 0.0;
    for (int c = 0; c < psi.cols(); ++c) {
      const double mean = psi.col(c).mean();
      const double var = (psi.col(c).array() - mean).square().sum() / static_cast<double>(n - 1);
      max_sd = std::max(max_sd, std::sqrt(var));
    }
    CHECK(g.norm() <= 4.0 * max_sd / std::sqrt(static_cast<double>(n)));
  }
}

}  // TEST_SUITE
