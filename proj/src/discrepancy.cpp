#include "fusion/discrepancy.hpp"

#include <algorithm>
#include <cmath>

#include "fusion/common.hpp"
#include "fusion/rng.hpp"

namespace fusion {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MmdResult mmd_joint(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() < 1 || b.rows() < 1) throw DataError("mmd_joint: empty sample");
  if (a.cols() != b.cols()) throw DimensionError("mmd_joint: feature dims disagree");
  const long na = a.rows(), nb = b.rows(), n = na + nb;

  MatrixXd pool(n, a.cols());
  pool.topRows(na) = a;
  pool.bottomRows(nb) = b;
  const VectorXd sq = pool.rowwise().squaredNorm();

  // Median pairwise distance over distinct pooled pairs, streamed row by row
  // to keep memory at O(n) plus the flat pair list.
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (long i = 0; i < n; ++i) {
    if (i + 1 >= n) break;
    VectorXd row = (pool.bottomRows(n - i - 1) * pool.row(i).transpose());
    for (long j = i + 1; j < n; ++j) {
      double d2 = sq(i) + sq(j) - 2.0 * row(j - i - 1);
      dists.push_back(std::sqrt(std::max(0.0, d2)));
    }
  }
  MmdResult res;
  res.n_a = na;
  res.n_b = nb;
  if (dists.empty()) {
    res.bandwidth = 1.0;
    return res;
  }
  std::size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + static_cast<long>(mid), dists.end());
  double med = dists[mid];
  if (dists.size() % 2 == 0) {
    double lower = *std::max_element(dists.begin(), dists.begin() + static_cast<long>(mid));
    med = 0.5 * (lower + med);
  }
  if (med <= 0.0) {
    // All pooled rows coincide: the discrepancy is exactly zero.
    res.bandwidth = 1.0;
    return res;
  }
  res.bandwidth = med;

  const double denom = 2.0 * med * med;
  auto block_mean = [&](long off_i, long ni, long off_j, long nj) {
    double s = 0.0;
    for (long i = 0; i < ni; ++i) {
      VectorXd prod = pool.middleRows(off_j, nj) * pool.row(off_i + i).transpose();
      for (long j = 0; j < nj; ++j) {
        double d2 = sq(off_i + i) + sq(off_j + j) - 2.0 * prod(j);
        s += std::exp(-std::max(0.0, d2) / denom);
      }
    }
    return s / (static_cast<double>(ni) * static_cast<double>(nj));
  };
  const double kaa = block_mean(0, na, 0, na);
  const double kbb = block_mean(na, nb, na, nb);
  const double kab = block_mean(0, na, na, nb);
  res.raw_sq = kaa + kbb - 2.0 * kab;
  res.value = std::sqrt(std::max(0.0, res.raw_sq));
  return res;
}

MatrixXd joint_features(const MatrixXd& feats, const std::vector<int>& t, int arms) {
  if (arms < 2) throw ConfigError("joint_features: need at least two arms");
  if (static_cast<long>(t.size()) != feats.rows())
    throw DimensionError("joint_features: t length mismatch");
  MatrixXd out = MatrixXd::Zero(feats.rows(), feats.cols() + arms);
  out.leftCols(feats.cols()) = feats;
  for (long i = 0; i < feats.rows(); ++i) {
    const int ti = t[static_cast<std::size_t>(i)];
    if (ti < 0 || ti >= arms) throw DataError("joint_features: arm out of range");
    out(i, feats.cols() + ti) = 1.0;
  }
  return out;
}

double critic_gap(const Mlp& critic, const MatrixXd& fa, const MatrixXd& fb) {
  if (fa.rows() < 1 || fb.rows() < 1) throw DataError("critic_gap: empty sample");
  Mlp scratch = critic;
  double ma = scratch.forward(fa).col(0).mean();
  double mb = scratch.forward(fb).col(0).mean();
  return ma - mb;
}

TvResult marginal_treatment_tv(const Dataset& ds, const std::vector<int>& rows_a,
                               const std::vector<int>& rows_b) {
  if (rows_a.empty() || rows_b.empty()) throw DataError("marginal_treatment_tv: empty side");
  const int arms = ds.arms();
  std::vector<double> pa(static_cast<std::size_t>(arms), 0.0), pb = pa;
  for (int r : rows_a) pa[static_cast<std::size_t>(ds.t[static_cast<std::size_t>(r)])] += 1.0;
  for (int r : rows_b) pb[static_cast<std::size_t>(ds.t[static_cast<std::size_t>(r)])] += 1.0;
  TvResult res;
  for (int arm = 0; arm < arms; ++arm) {
    double fa = pa[static_cast<std::size_t>(arm)] / static_cast<double>(rows_a.size());
    double fb = pb[static_cast<std::size_t>(arm)] / static_cast<double>(rows_b.size());
    res.tv += 0.5 * std::abs(fa - fb);
    if (fa > 0.0 && fb == 0.0) res.missing_in_b.push_back(arm);
  }
  return res;
}

std::vector<int> subsample_rows(const std::vector<int>& rows, long cap, std::uint64_t seed) {
  if (cap <= 0) throw ConfigError("subsample_rows: cap must be positive");
  if (static_cast<long>(rows.size()) <= cap) return rows;
  Rng rng(seed);
  std::vector<int> perm = rng.permutation(static_cast<int>(rows.size()));
  perm.resize(static_cast<std::size_t>(cap));
  std::sort(perm.begin(), perm.end());
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(cap));
  for (int idx : perm) out.push_back(rows[static_cast<std::size_t>(idx)]);
  return out;
}

}  // namespace fusion
