#pragma once

#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "svcam/dataset.hpp"

namespace svcam {

/// Clamped B-spline basis of a given order (degree + 1) on [lo, hi].
class SplineBasis {
 public:
  SplineBasis() = default;
  SplineBasis(int order, std::vector<double> interior_knots, double lo, double hi);

  int order() const { return order_; }
  const std::vector<double>& interior_knots() const { return interior_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  int dimension() const { return static_cast<int>(interior_.size()) + order_; }

  /// All basis values at x. Points outside [lo, hi] by less than 1e-12
  /// are clamped; anything farther raises a domain error.
  Eigen::VectorXd evaluate(double x) const;
  /// derivative-th derivative of every basis function at x.
  Eigen::VectorXd derivative(double x, int derivative) const;

 private:
  int span_index(double x) const;
  double clamp(double x) const;
  // Nonzero basis function derivatives at x, rows 0..n, `order_` columns,
  // for basis functions span-order+1..span.
  Eigen::MatrixXd local_derivatives(double x, int n, int& span) const;

  int order_ = 4;
  std::vector<double> interior_;
  std::vector<double> knots_;  // full clamped knot vector
  double lo_ = 0.0;
  double hi_ = 1.0;
};

/// Interior knots at equispaced quantiles of `values`; boundary at the
/// observed min and max.
SplineBasis make_basis(std::span<const double> values, int interior_knots, int order);

inline Eigen::VectorXd basis_eval(const SplineBasis& basis, double x) { return basis.evaluate(x); }

/// Kronecker product b_x (outer) with b_t (inner): entry a*|b_t| + c.
Eigen::VectorXd tensor_basis(const Eigen::VectorXd& b_t, const Eigen::VectorXd& b_x);

/// Unconstrained SUBJ-weighted least-squares fit of the intercept/Z block
/// on the time basis plus one tensor surface per continuous covariate.
struct PilotFit {
  std::size_t q = 0;
  std::size_t p = 0;
  Eigen::VectorXd gamma0;               // (q+1) * J_C, entry l*J_C + c
  std::vector<Eigen::VectorXd> gamma_k; // J_A * J_C, entry a*J_C + c
  SplineBasis basis_c;
  std::vector<SplineBasis> basis_a;
  double rss = 0.0;        // sum_i m_i^-1 sum_j r_ij^2
  int null_dimension = 0;  // rank deficit of the design (p * J_C is structural)

  int parameter_count() const;
  /// Fitted mean at one observation-like point.
  double fitted(double t, const Eigen::VectorXd& z_aug, const Eigen::VectorXd& x) const;
  /// Surface g_k(t, x).
  double surface(std::size_t k, double t, double x) const;
};

PilotFit fit_pilot(const LongitudinalDataset& ds, int interior_knots_c, int interior_knots_a,
                   int order = 4);

/// Pilot additive component: the tensor surface averaged over all observed
/// times, minus its empirical mean over the observed covariate values.
struct PilotAdditive {
  std::size_t k = 0;
  std::vector<double> grid;
  std::vector<double> values;
  double centering_constant = 0.0;
  Eigen::VectorXd coefficients;  // on basis_a
  SplineBasis basis;

  double operator()(double x) const;
  double second_derivative(double x) const;
};

PilotAdditive pilot_beta(const PilotFit& fit, const LongitudinalDataset& ds, std::size_t k,
                         std::span<const double> grid);

/// Coefficient-function curvature implied by the pilot fit, used for bias
/// plug-ins. Identified through the centered pilot additive components:
///   trend   = gamma_00' b_C(t) + sum_k mean_obs g_k(t, X_k)
///   alpha_k proportional to mean_obs g_k(t, X_k) beta_kP(X_k),
/// rescaled so that its empirical mean over the observed times is 1.
struct PilotCoefficients {
  std::vector<Eigen::VectorXd> coefficients;  // q+1+p vectors on basis_c
  SplineBasis basis;

  double value(std::size_t component, double t) const;
  double second_derivative(std::size_t component, double t) const;
};

PilotCoefficients pilot_coefficients(const PilotFit& fit, const LongitudinalDataset& ds);

struct KnotSelection {
  int k_c = 0;
  int k_a = 0;
  double bic = 0.0;
  struct Candidate {
    int k_c;
    int k_a;
    int parameters;
    double bic;  // NaN when the candidate could not be fitted
  };
  std::vector<Candidate> table;
};

/// Exhaustive BIC(K_C, K_A) = log(RSS) + P log(n) / n over the grid,
/// RSS = n^-1 sum_i m_i^-1 sum_j r_ij^2, ties toward fewer parameters.
KnotSelection select_knots_bic(const LongitudinalDataset& ds, std::span<const int> grid_c,
                               std::span<const int> grid_a, int order = 4);

}  // namespace svcam
