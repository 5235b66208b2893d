#include <algorithm>
#include <cmath>
#include <vector>

#include <doctest.h>

#include "fusion/common.hpp"
#include "fusion/discrepancy.hpp"
#include "fusion/nets.hpp"
#include "fusion/rng.hpp"

using namespace fusion;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Brute-force kernel discrepancy: full sort for the median of distinct pooled
// pairwise distances, then plain double loops over all (i, j) block pairs.
struct BruteMmd {
  double value, raw_sq, bandwidth;
};

BruteMmd brute_mmd(const MatrixXd& a, const MatrixXd& b) {
  const long na = a.rows(), nb = b.rows();
  MatrixXd pool(na + nb, a.cols());
  pool.topRows(na) = a;
  pool.bottomRows(nb) = b;
  std::vector<double> dists;
  for (long i = 0; i < pool.rows(); ++i)
    for (long j = i + 1; j < pool.rows(); ++j)
      dists.push_back((pool.row(i) - pool.row(j)).norm());
  std::sort(dists.begin(), dists.end());
  double med;
  const std::size_t m = dists.size();
  if (m % 2 == 1) med = dists[m / 2];
  else med = 0.5 * (dists[m / 2 - 1] + dists[m / 2]);

  auto kern = [&](const Eigen::RowVectorXd& u, const Eigen::RowVectorXd& v) {
    const double d2 = (u - v).squaredNorm();
    return std::exp(-d2 / (2.0 * med * med));
  };
  double kaa = 0.0, kbb = 0.0, kab = 0.0;
  for (long i = 0; i < na; ++i)
    for (long j = 0; j < na; ++j) kaa += kern(a.row(i), a.row(j));
  for (long i = 0; i < nb; ++i)
    for (long j = 0; j < nb; ++j) kbb += kern(b.row(i), b.row(j));
  for (long i = 0; i < na; ++i)
    for (long j = 0; j < nb; ++j) kab += kern(a.row(i), b.row(j));
  kaa /= static_cast<double>(na) * static_cast<double>(na);
  kbb /= static_cast<double>(nb) * static_cast<double>(nb);
  kab /= static_cast<double>(na) * static_cast<double>(nb);
  BruteMmd out;
  out.raw_sq = kaa + kbb - 2.0 * kab;
  out.value = std::sqrt(std::max(0.0, out.raw_sq));
  out.bandwidth = med;
  return out;
}

MatrixXd random_matrix(long rows, long cols, Rng& rng, double scale = 1.0) {
  MatrixXd m(rows, cols);
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  return m;
}

Dataset arm_only_dataset(const std::vector<int>& t, int arms) {
  Dataset ds;
  const long n = static_cast<long>(t.size());
  ds.x = MatrixXd::Zero(n, 1);
  ds.t = t;
  ds.y = VectorXd::Zero(n);
  ds.source.assign(t.size(), Source::kRct);
  ds.probs.marginal = VectorXd::Constant(arms, 1.0 / static_cast<double>(arms));
  return ds;
}

}  // namespace

TEST_SUITE("discrepancy") {

TEST_CASE("kernel discrepancy matches the brute-force oracle") {
  Rng rng(404u);
  for (int rep = 0; rep < 5; ++rep) {
    const MatrixXd a = random_matrix(17, 3, rng);
    const MatrixXd b = random_matrix(23, 3, rng, 1.4) +
                       MatrixXd::Constant(23, 3, 0.3 * rep);
    const MmdResult got = mmd_joint(a, b);
    const BruteMmd want = brute_mmd(a, b);
    CHECK(got.bandwidth == doctest::Approx(want.bandwidth).epsilon(1e-12));
    CHECK(got.raw_sq == doctest::Approx(want.raw_sq).epsilon(1e-10));
    CHECK(got.value == doctest::Approx(want.value).epsilon(1e-10));
    CHECK(got.n_a == 17);
    CHECK(got.n_b == 23);
  }
}

TEST_CASE("kernel discrepancy edge behavior") {
  Rng rng(405u);
  const MatrixXd a = random_matrix(12, 4, rng);

  SUBCASE("identical samples give exactly zero") {
    const MmdResult res = mmd_joint(a, a);
    CHECK(res.raw_sq == 0.0);
    CHECK(res.value == 0.0);
    CHECK(res.bandwidth > 0.0);
  }
  SUBCASE("fully coincident pool short-circuits with zero") {
    const MatrixXd c = MatrixXd::Constant(5, 3, 2.5);
    const MmdResult res = mmd_joint(c, c);
    CHECK(res.value == 0.0);
    CHECK(res.bandwidth == 1.0);
  }
  SUBCASE("well-separated samples score high") {
    const MatrixXd b = a.array() + 25.0;
    const MmdResult res = mmd_joint(a, b);
    CHECK(res.value > 0.5);
  }
  SUBCASE("single-row samples are accepted") {
    const MmdResult res = mmd_joint(a.topRows(1), a.bottomRows(1));
    CHECK(std::isfinite(res.value));
  }
  SUBCASE("input validation") {
    CHECK_THROWS_AS(mmd_joint(MatrixXd(0, 3), a), DataError);
    CHECK_THROWS_AS(mmd_joint(a, random_matrix(4, 5, rng)), DimensionError);
  }
}

TEST_CASE("joint embedding stacks features with a one-hot arm block") {
  MatrixXd feats(2, 2);
  feats << 1.0, 2.0,
           3.0, 4.0;
  const MatrixXd out = joint_features(feats, {1, 0}, 3);
  REQUIRE(out.rows() == 2);
  REQUIRE(out.cols() == 5);
  CHECK(out(0, 0) == 1.0);
  CHECK(out(0, 1) == 2.0);
  CHECK(out(1, 0) == 3.0);
  CHECK(out(1, 1) == 4.0);
  CHECK(out(0, 2) == 0.0);
  CHECK(out(0, 3) == 1.0);
  CHECK(out(0, 4) == 0.0);
  CHECK(out(1, 2) == 1.0);
  CHECK(out(1, 3) == 0.0);
  CHECK(out(1, 4) == 0.0);

  CHECK_THROWS_AS(joint_features(feats, {1, 0}, 1), ConfigError);
  CHECK_THROWS_AS(joint_features(feats, {1}, 2), DimensionError);
  CHECK_THROWS_AS(joint_features(feats, {1, 2}, 2), DataError);
}

TEST_CASE("critic gap equals the difference of mean critic outputs") {
  Rng rng(406u);
  Layout layout = {{3, 4, Activation::kTanh}, {4, 1, Activation::kIdentity}};
  Mlp critic(layout, InitScheme::kScaledUniform, rng);
  const MatrixXd fa = random_matrix(9, 3, rng);
  const MatrixXd fb = random_matrix(6, 3, rng, 0.5);

  Mlp eval_a = critic;
  Mlp eval_b = critic;
  const double want = eval_a.forward(fa).col(0).mean() - eval_b.forward(fb).col(0).mean();
  CHECK(critic_gap(critic, fa, fb) == doctest::Approx(want).epsilon(1e-14));
  CHECK_THROWS_AS(critic_gap(critic, MatrixXd(0, 3), fb), DataError);
}

TEST_CASE("marginal treatment distance from hand counts") {
  Dataset ds = arm_only_dataset({0, 1, 2, 1, 0, 0}, 3);
  const std::vector<int> rows_a = {0, 1, 2, 3};  // freqs (0.25, 0.5, 0.25)
  const std::vector<int> rows_b = {4, 5};        // freqs (1, 0, 0)
  const TvResult res = marginal_treatment_tv(ds, rows_a, rows_b);
  CHECK(res.tv == 0.75);
  REQUIRE(res.missing_in_b.size() == 2);
  CHECK(res.missing_in_b[0] == 1);
  CHECK(res.missing_in_b[1] == 2);

  SUBCASE("identical sides give zero and no missing arms") {
    const TvResult same = marginal_treatment_tv(ds, rows_a, rows_a);
    CHECK(same.tv == 0.0);
    CHECK(same.missing_in_b.empty());
  }
  SUBCASE("missing arms are one-directional") {
    const TvResult rev = marginal_treatment_tv(ds, rows_b, rows_a);
    CHECK(rev.tv == 0.75);
    CHECK(rev.missing_in_b.empty());
  }
  SUBCASE("empty sides are rejected") {
    CHECK_THROWS_AS(marginal_treatment_tv(ds, {}, rows_b), DataError);
    CHECK_THROWS_AS(marginal_treatment_tv(ds, rows_a, {}), DataError);
  }
}

TEST_CASE("subsampling is deterministic, capped, and order-preserving") {
  std::vector<int> rows;
  for (int i = 0; i < 500; ++i) rows.push_back(1000 + 3 * i);

  const std::vector<int> s1 = subsample_rows(rows, 120, 9u);
  const std::vector<int> s2 = subsample_rows(rows, 120, 9u);
  const std::vector<int> s3 = subsample_rows(rows, 120, 10u);
  REQUIRE(s1.size() == 120);
  CHECK(s1 == s2);
  CHECK(s1 != s3);

  // Strictly increasing because the source list is; also a subset of it.
  for (std::size_t i = 1; i < s1.size(); ++i) CHECK(s1[i] > s1[i - 1]);
  for (int v : s1) CHECK((v - 1000) % 3 == 0);

  SUBCASE("small inputs pass through untouched") {
    CHECK(subsample_rows(rows, 500, 1u) == rows);
    CHECK(subsample_rows(rows, 5000, 1u) == rows);
  }
  SUBCASE("cap must be positive") {
    CHECK_THROWS_AS(subsample_rows(rows, 0, 1u), ConfigError);
  }
}

}  // TEST_SUITE
