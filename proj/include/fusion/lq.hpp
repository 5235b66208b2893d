#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace fusion {

// Quadratic risks R_o(th) = 0.5 th'H_o th + b_o'th + r0_o (and likewise R_r)
// with affine constraint map g(th) = A th - c. H_o, H_r symmetric positive
// definite; A has full row rank.
struct LqInstance {
  Eigen::MatrixXd h_o;
  Eigen::VectorXd b_o;
  double r0_o = 0.0;
  Eigen::MatrixXd h_r;
  Eigen::VectorXd b_r;
  double r0_r = 0.0;
  Eigen::MatrixXd a;
  Eigen::VectorXd c;

  // Filled by gen_lq_toy / solve helpers.
  Eigen::VectorXd theta_unconstrained;  // argmin R_o
  Eigen::VectorXd theta_star;           // constrained minimizer
  Eigen::VectorXd lambda_star;          // KKT multiplier at theta_star
  double delta_o = 0.0;                 // R_o(theta_star) - R_o(theta_unconstrained)

  int dim() const { return static_cast<int>(h_o.rows()); }
  int n_constraints() const { return static_cast<int>(a.rows()); }

  double risk_o(const Eigen::VectorXd& th) const;
  double risk_r(const Eigen::VectorXd& th) const;
  Eigen::VectorXd grad_o(const Eigen::VectorXd& th) const;
  Eigen::VectorXd grad_r(const Eigen::VectorXd& th) const;
  Eigen::VectorXd g(const Eigen::VectorXd& th) const;
  void validate() const;
};

struct LqToyOptions {
  // Constraint offset: 0 routes the constraint through the unconstrained
  // minimizer (lambda* = 0); otherwise |g(theta_unconstrained)| equals this.
  double infeasibility = 1.0;
  double eig_lo = 0.5;
  double eig_hi = 5.0;
  double r_eig_lo = 0.5;
  double r_eig_hi = 5.0;
};

LqInstance gen_lq_toy(int dim, int k, std::uint64_t seed, const LqToyOptions& opts = {});

struct KktSolution {
  Eigen::VectorXd theta;
  Eigen::VectorXd lambda;
};
KktSolution kkt_solve(const Eigen::MatrixXd& h, const Eigen::VectorXd& b,
                      const Eigen::MatrixXd& a, const Eigen::VectorXd& c);

// argmin R_o + (rho/2)|g|^2 = (H + rho A'A)^{-1} (rho A'c - b).
Eigen::VectorXd penalty_minimizer(const LqInstance& inst, double rho);
// argmin R_o + alpha R_r.
Eigen::VectorXd weighted_minimizer(const LqInstance& inst, double alpha);
// Condition number of the penalty Hessian H_o + rho A'A.
double penalty_condition_number(const LqInstance& inst, double rho);
// Closed-form residual map: g(theta_rho) = (I + rho A H^{-1} A')^{-1} g(theta_u).
Eigen::VectorXd penalty_residual_closed_form(const LqInstance& inst, double rho);

// Extremes of q(th) = 0.5 th'H th + b'th over the ball |th| <= radius,
// H symmetric PSD. Boundary solves use the eigenbasis secular equation.
double quad_max_on_ball(const Eigen::MatrixXd& h, const Eigen::VectorXd& b, double radius);
double quad_min_on_ball(const Eigen::MatrixXd& h, const Eigen::VectorXd& b, double radius);

// Constants feeding the exclusion-region analysis, computed for the model
// class {|th - theta_star| <= radius} centered at the constrained solution.
struct ExclusionConstants {
  double radius = 0.0;    // model class ball radius
  double mu = 0.0;        // strong convexity of R_o (lambda_min H_o)
  double mu_o = 0.0;      // quadratic-growth constant (lambda_min H_o / 2)
  double l_o = 0.0;       // |g| <= l_o * dist factor (sigma_max A)
  double l_g = 0.0;       // Lipschitz constant of g (sigma_max A)
  double b_r = 0.0;       // range of R_r over the ball
  double m_r = 0.0;       // max |grad R_r| along the weighted path on [0, alpha_bar]
  double alpha_bar = 0.0; // delta_o / (2 b_r)
  double g0_norm = 0.0;   // |g(theta_0)| at alpha = 0
  double c0 = 0.0;        // g0_norm - (l_g m_r / mu) alpha_bar
  double eps0 = 0.0;      // (mu_o / l_o^2) c0^2
};
ExclusionConstants exclusion_constants(const LqInstance& inst, int path_grid = 512);

}  // namespace fusion
