#include "fusion/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fusion/common.hpp"

namespace fusion {

using Eigen::VectorXd;

double qini_area(const VectorXd& tau_hat, const std::vector<int>& t, const VectorXd& y) {
  const long n = tau_hat.size();
  if (n < 2) throw DataError("qini_area: need at least two rows");
  if (static_cast<long>(t.size()) != n || y.size() != n)
    throw DimensionError("qini_area: shape mismatch");

  long n1 = 0, n0 = 0;
  for (int ti : t) {
    if (ti == 1) ++n1;
    else if (ti == 0) ++n0;
    else throw DataError("qini_area: treatment must be binary");
  }
  if (n1 == 0 || n0 == 0) throw DataError("qini_area: need both arms present");

  std::vector<long> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0L);
  std::stable_sort(order.begin(), order.end(),
                   [&](long a, long b) { return tau_hat(a) > tau_hat(b); });

  double s1 = 0.0, s0 = 0.0, area = 0.0, prev = 0.0;
  // uplift at full depth, needed for the diagonal reference line.
  double total1 = 0.0, total0 = 0.0;
  for (long i = 0; i < n; ++i) {
    if (t[static_cast<std::size_t>(i)] == 1) total1 += y(i);
    else total0 += y(i);
  }
  const double uplift_full = total1 / static_cast<double>(n1) - total0 / static_cast<double>(n0);

  for (long i = 0; i < n; ++i) {
    const long r = order[static_cast<std::size_t>(i)];
    if (t[static_cast<std::size_t>(r)] == 1) s1 += y(r);
    else s0 += y(r);
    const double q = static_cast<double>(i + 1) / static_cast<double>(n);
    const double uplift = s1 / static_cast<double>(n1) - s0 / static_cast<double>(n0);
    const double v = uplift - q * uplift_full;
    area += 0.5 * (prev + v) / static_cast<double>(n);
    prev = v;
  }
  return area;
}

double mse(const VectorXd& a, const VectorXd& b) {
  if (a.size() != b.size() || a.size() == 0) throw DimensionError("mse: shape mismatch");
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

double mape_deciles(const VectorXd& tau_hat, const VectorXd& tau_true) {
  const long n = tau_hat.size();
  if (tau_true.size() != n) throw DimensionError("mape_deciles: shape mismatch");
  if (n < 10) throw DataError("mape_deciles: need at least 10 rows");
  constexpr double kFloor = 0.05;

  std::vector<long> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0L);
  std::stable_sort(order.begin(), order.end(),
                   [&](long a, long b) { return tau_true(a) < tau_true(b); });

  double acc = 0.0;
  for (int bin = 0; bin < 10; ++bin) {
    const long lo = bin * n / 10;
    const long hi = (bin + 1) * n / 10;
    double mh = 0.0, mt = 0.0;
    for (long i = lo; i < hi; ++i) {
      mh += tau_hat(order[static_cast<std::size_t>(i)]);
      mt += tau_true(order[static_cast<std::size_t>(i)]);
    }
    const double cnt = static_cast<double>(hi - lo);
    mh /= cnt;
    mt /= cnt;
    acc += std::abs(mh - mt) / std::max(std::abs(mt), kFloor);
  }
  return acc / 10.0;
}

Aggregate aggregate(const std::vector<double>& values) {
  if (values.empty()) throw DataError("aggregate: empty input");
  Aggregate a;
  a.n = static_cast<long>(values.size());
  a.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(a.n);
  if (a.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.sd = std::sqrt(ss / static_cast<double>(a.n - 1));
  }
  return a;
}

}  // namespace fusion
