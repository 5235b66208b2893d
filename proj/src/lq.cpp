#include "fusion/lq.hpp"

#include <algorithm>
#include <cmath>

#include "fusion/common.hpp"
#include "fusion/rng.hpp"

namespace fusion {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double LqInstance::risk_o(const VectorXd& th) const {
  return 0.5 * th.dot(h_o * th) + b_o.dot(th) + r0_o;
}

double LqInstance::risk_r(const VectorXd& th) const {
  return 0.5 * th.dot(h_r * th) + b_r.dot(th) + r0_r;
}

VectorXd LqInstance::grad_o(const VectorXd& th) const { return h_o * th + b_o; }

VectorXd LqInstance::grad_r(const VectorXd& th) const { return h_r * th + b_r; }

VectorXd LqInstance::g(const VectorXd& th) const { return a * th - c; }

void LqInstance::validate() const {
  const int d = dim();
  if (h_o.cols() != d || h_r.rows() != d || h_r.cols() != d)
    throw DimensionError("lq: Hessian shapes disagree");
  if (b_o.size() != d || b_r.size() != d) throw DimensionError("lq: linear term shapes disagree");
  if (a.cols() != d || c.size() != a.rows()) throw DimensionError("lq: constraint shapes disagree");
  if (!h_o.isApprox(h_o.transpose(), 1e-10) || !h_r.isApprox(h_r.transpose(), 1e-10))
    throw DataError("lq: Hessians must be symmetric");
  Eigen::SelfAdjointEigenSolver<MatrixXd> eo(h_o), er(h_r);
  if (eo.eigenvalues().minCoeff() <= 0.0 || er.eigenvalues().minCoeff() <= 0.0)
    throw DataError("lq: Hessians must be positive definite");
  Eigen::JacobiSVD<MatrixXd> svd(a);
  if (svd.singularValues().minCoeff() <= 1e-10 * svd.singularValues().maxCoeff())
    throw DataError("lq: constraint matrix must have full row rank");
}

namespace {

MatrixXd random_orthogonal(int dim, Rng& rng) {
  MatrixXd m(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) m(i, j) = rng.normal();
  Eigen::HouseholderQR<MatrixXd> qr(m);
  MatrixXd q = qr.householderQ();
  MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < dim; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  return q;
}

MatrixXd random_spd(int dim, double lo, double hi, Rng& rng) {
  MatrixXd q = random_orthogonal(dim, rng);
  VectorXd eig(dim);
  for (int i = 0; i < dim; ++i) eig(i) = rng.uniform(lo, hi);
  return q * eig.asDiagonal() * q.transpose();
}

}  // namespace

LqInstance gen_lq_toy(int dim, int k, std::uint64_t seed, const LqToyOptions& opts) {
  if (dim < 1 || k < 1 || k >= dim) throw ConfigError("gen_lq_toy: need 1 <= k < dim");
  if (!(opts.eig_lo > 0.0 && opts.eig_hi >= opts.eig_lo))
    throw ConfigError("gen_lq_toy: bad eigenvalue range");
  Rng rng(seed);

  LqInstance inst;
  inst.h_o = random_spd(dim, opts.eig_lo, opts.eig_hi, rng);
  inst.b_o.resize(dim);
  for (int i = 0; i < dim; ++i) inst.b_o(i) = rng.normal();
  inst.a.resize(k, dim);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < dim; ++j) inst.a(i, j) = rng.normal();

  inst.theta_unconstrained = inst.h_o.ldlt().solve(-inst.b_o);
  if (opts.infeasibility == 0.0) {
    inst.c = inst.a * inst.theta_unconstrained;
  } else {
    VectorXd w(k);
    for (int i = 0; i < k; ++i) w(i) = rng.normal();
    w /= w.norm();
    inst.c = inst.a * inst.theta_unconstrained + opts.infeasibility * w;
  }

  KktSolution sol = kkt_solve(inst.h_o, inst.b_o, inst.a, inst.c);
  inst.theta_star = sol.theta;
  inst.lambda_star = sol.lambda;
  inst.delta_o = inst.risk_o(inst.theta_star) - inst.risk_o(inst.theta_unconstrained);

  inst.h_r = random_spd(dim, opts.r_eig_lo, opts.r_eig_hi, rng);
  // R_r is minimized at theta_star so the fused direction pulls toward the
  // feasible optimum; r0 terms keep both risks nonnegative.
  inst.b_r = -inst.h_r * inst.theta_star;
  inst.r0_r = -(0.5 * inst.theta_star.dot(inst.h_r * inst.theta_star) +
                inst.b_r.dot(inst.theta_star));
  inst.r0_o = -(0.5 * inst.theta_unconstrained.dot(inst.h_o * inst.theta_unconstrained) +
                inst.b_o.dot(inst.theta_unconstrained));

  inst.validate();
  return inst;
}

KktSolution kkt_solve(const MatrixXd& h, const VectorXd& b, const MatrixXd& a,
                      const VectorXd& c) {
  const int d = static_cast<int>(h.rows());
  const int k = static_cast<int>(a.rows());
  if (h.cols() != d || b.size() != d || a.cols() != d || c.size() != k)
    throw DimensionError("kkt_solve: shape mismatch");
  MatrixXd kkt = MatrixXd::Zero(d + k, d + k);
  kkt.topLeftCorner(d, d) = h;
  kkt.topRightCorner(d, k) = a.transpose();
  kkt.bottomLeftCorner(k, d) = a;
  VectorXd rhs(d + k);
  rhs.head(d) = -b;
  rhs.tail(k) = c;
  Eigen::FullPivLU<MatrixXd> lu(kkt);
  if (!lu.isInvertible()) throw DataError("kkt_solve: singular KKT system");
  VectorXd sol = lu.solve(rhs);
  return {sol.head(d), sol.tail(k)};
}

VectorXd penalty_minimizer(const LqInstance& inst, double rho) {
  if (rho < 0.0) throw ConfigError("penalty_minimizer: rho must be nonnegative");
  MatrixXd h = inst.h_o + rho * inst.a.transpose() * inst.a;
  return h.ldlt().solve(rho * inst.a.transpose() * inst.c - inst.b_o);
}

VectorXd weighted_minimizer(const LqInstance& inst, double alpha) {
  if (alpha < 0.0) throw ConfigError("weighted_minimizer: alpha must be nonnegative");
  MatrixXd h = inst.h_o + alpha * inst.h_r;
  return h.ldlt().solve(-(inst.b_o + alpha * inst.b_r));
}

double penalty_condition_number(const LqInstance& inst, double rho) {
  if (rho < 0.0) throw ConfigError("penalty_condition_number: rho must be nonnegative");
  MatrixXd h = inst.h_o + rho * inst.a.transpose() * inst.a;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(h);
  return es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
}

VectorXd penalty_residual_closed_form(const LqInstance& inst, double rho) {
  const int k = inst.n_constraints();
  MatrixXd hinv_at = inst.h_o.ldlt().solve(inst.a.transpose());
  MatrixXd m = MatrixXd::Identity(k, k) + rho * inst.a * hinv_at;
  VectorXd g_u = inst.g(inst.theta_unconstrained);
  return m.lu().solve(g_u);
}

namespace {

// Norm of the boundary stationary point th(mu) with coordinates
// beta_i / (mu - lam_i) in the eigenbasis (maximization branch).
double boundary_norm_max(const VectorXd& lam, const VectorXd& beta, double mu) {
  double s = 0.0;
  for (int i = 0; i < lam.size(); ++i) {
    double d = mu - lam(i);
    s += beta(i) * beta(i) / (d * d);
  }
  return std::sqrt(s);
}

double quad_value(const MatrixXd& h, const VectorXd& b, const VectorXd& th) {
  return 0.5 * th.dot(h * th) + b.dot(th);
}

}  // namespace

double quad_max_on_ball(const MatrixXd& h, const VectorXd& b, double radius) {
  if (radius <= 0.0) throw ConfigError("quad_max_on_ball: radius must be positive");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(h);
  if (es.eigenvalues().minCoeff() < -1e-10) throw DataError("quad_max_on_ball: H must be PSD");
  const VectorXd lam = es.eigenvalues();
  const MatrixXd v = es.eigenvectors();
  const VectorXd beta = v.transpose() * b;
  const int d = static_cast<int>(lam.size());
  const double lmax = lam.maxCoeff();

  // With H PSD and any b, the max over the ball sits on the sphere. The
  // stationary condition (mu I - H) th = b with mu >= lmax has monotone
  // decreasing norm in mu; bisect unless b is orthogonal to the top
  // eigenspace (hard case: fill the top direction to reach the sphere).
  double top_mass = 0.0;
  for (int i = 0; i < d; ++i)
    if (lmax - lam(i) < 1e-10 * std::max(1.0, lmax)) top_mass += beta(i) * beta(i);

  VectorXd th_eig(d);
  if (top_mass > 1e-24) {
    double lo = lmax + 1e-14 * std::max(1.0, lmax) + 1e-300;
    double hi = lmax + b.norm() / radius + 1.0;
    while (boundary_norm_max(lam, beta, lo) < radius) lo = lmax + (lo - lmax) / 2.0;
    for (int it = 0; it < 200; ++it) {
      double mid = 0.5 * (lo + hi);
      if (boundary_norm_max(lam, beta, mid) > radius) lo = mid;
      else hi = mid;
    }
    double mu = 0.5 * (lo + hi);
    for (int i = 0; i < d; ++i) th_eig(i) = beta(i) / (mu - lam(i));
  } else {
    double partial = 0.0;
    for (int i = 0; i < d; ++i) {
      if (lmax - lam(i) < 1e-10 * std::max(1.0, lmax)) th_eig(i) = 0.0;
      else th_eig(i) = beta(i) / (lmax - lam(i));
      partial += th_eig(i) * th_eig(i);
    }
    if (partial > radius * radius) {
      // Interior mass already exceeds the sphere: fall back to bisection on
      // mu slightly above lmax (norm still diverges numerically).
      double lo = lmax * (1.0 + 1e-12) + 1e-300;
      double hi = lmax + b.norm() / radius + 1.0;
      for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (boundary_norm_max(lam, beta, mid) > radius) lo = mid;
        else hi = mid;
      }
      double mu = 0.5 * (lo + hi);
      for (int i = 0; i < d; ++i) th_eig(i) = beta(i) / (mu - lam(i));
    } else {
      double fill = std::sqrt(std::max(0.0, radius * radius - partial));
      for (int i = 0; i < d; ++i)
        if (lmax - lam(i) < 1e-10 * std::max(1.0, lmax)) {
          th_eig(i) = fill;
          break;
        }
      if (d == 1) th_eig(0) = std::copysign(radius, beta(0) == 0.0 ? 1.0 : beta(0));
    }
  }
  VectorXd th = v * th_eig;
  double val = quad_value(h, b, th);
  // Antipodal candidate guards the sign choice in degenerate fills.
  val = std::max(val, quad_value(h, b, VectorXd(-th)));
  return val;
}

double quad_min_on_ball(const MatrixXd& h, const VectorXd& b, double radius) {
  if (radius <= 0.0) throw ConfigError("quad_min_on_ball: radius must be positive");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(h);
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw DataError("quad_min_on_ball: H must be positive definite");
  VectorXd th_u = h.ldlt().solve(-b);
  if (th_u.norm() <= radius) return quad_value(h, b, th_u);
  const VectorXd lam = es.eigenvalues();
  const VectorXd beta = es.eigenvectors().transpose() * b;
  const int d = static_cast<int>(lam.size());
  // Boundary solve (H + mu I) th = -b, mu > 0; norm decreases in mu.
  double lo = 0.0, hi = b.norm() / radius + 1.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
      double dd = lam(i) + mid;
      s += beta(i) * beta(i) / (dd * dd);
    }
    if (std::sqrt(s) > radius) lo = mid;
    else hi = mid;
  }
  double mu = 0.5 * (lo + hi);
  VectorXd th_eig(d);
  for (int i = 0; i < d; ++i) th_eig(i) = -beta(i) / (lam(i) + mu);
  VectorXd th = es.eigenvectors() * th_eig;
  return quad_value(h, b, th);
}

ExclusionConstants exclusion_constants(const LqInstance& inst, int path_grid) {
  if (path_grid < 2) throw ConfigError("exclusion_constants: path_grid too small");
  ExclusionConstants k;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eo(inst.h_o);
  k.mu = eo.eigenvalues().minCoeff();
  k.mu_o = 0.5 * k.mu;
  Eigen::JacobiSVD<MatrixXd> svd(inst.a);
  k.l_o = svd.singularValues().maxCoeff();
  k.l_g = k.l_o;

  k.radius = 2.0 * std::max(inst.theta_unconstrained.norm(), inst.theta_star.norm()) + 1.0;

  // Range of R_r over the ball centered at theta_star: substitute
  // th = theta_star + d and take extremes of the quadratic in d.
  VectorXd b_shift = inst.h_r * inst.theta_star + inst.b_r;
  double at_center = inst.risk_r(inst.theta_star);
  double hi = at_center + quad_max_on_ball(inst.h_r, b_shift, k.radius);
  double lo = at_center + quad_min_on_ball(inst.h_r, b_shift, k.radius);
  k.b_r = hi - lo;

  if (k.b_r <= 0.0) throw DataError("exclusion_constants: degenerate auxiliary risk range");
  k.alpha_bar = inst.delta_o / (2.0 * k.b_r);

  k.m_r = 0.0;
  for (int i = 0; i < path_grid; ++i) {
    double alpha = k.alpha_bar * static_cast<double>(i) / (path_grid - 1);
    VectorXd th = weighted_minimizer(inst, alpha);
    k.m_r = std::max(k.m_r, inst.grad_r(th).norm());
  }

  k.g0_norm = inst.g(inst.theta_unconstrained).norm();
  k.c0 = k.g0_norm - (k.l_g * k.m_r / k.mu) * k.alpha_bar;
  k.eps0 = (k.mu_o / (k.l_o * k.l_o)) * k.c0 * k.c0;
  return k;
}

}  // namespace fusion
