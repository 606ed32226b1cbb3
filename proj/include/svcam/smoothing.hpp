#pragma once

#include <cmath>
#include <limits>
#include <span>

#include <Eigen/Dense>

namespace svcam {

enum class KernelFamily { Epanechnikov };

struct KernelSpec {
  KernelFamily family = KernelFamily::Epanechnikov;
  double support_radius = 1.0;
};

struct KernelConstants {
  double kappa = 0.0;    // int k^2
  double kappa2 = 0.0;   // int u^2 k
  double kappa4 = 0.0;   // int u^4 k
  double kappa22 = 0.0;  // int u^2 k^2
};

/// Epanechnikov kernel 0.75(1-u^2) on [-1,1].
inline double kernel_eval(double u) {
  return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
}

/// Scaled kernel k(d/h)/h.
inline double kernel_h(double d, double h) { return kernel_eval(d / h) / h; }

KernelConstants kernel_constants(const KernelSpec& spec = {});

struct LocalFitResult {
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd gram;
  double effective_n = 0.0;
  bool ridged = false;
};

/// Accumulates weighted normal equations row by row, then solves them.
///
/// Rows with zero weight are skipped. The solve uses an LDLT factorization;
/// when the eigenvalue condition estimate of the gram matrix exceeds 1e12 a
/// ridge of 1e-8 * trace / dim is added and the result is flagged.
class NormalEquations {
 public:
  explicit NormalEquations(Eigen::Index dim);

  template <typename Row>
  void add(const Row& row, double y, double weight) {
    if (weight <= 0.0) return;
    gram_.selfadjointView<Eigen::Lower>().rankUpdate(row, weight);
    rhs_.noalias() += weight * y * row;
    effective_n_ += weight;
    ++support_;
  }

  Eigen::Index dim() const { return gram_.rows(); }
  std::size_t support() const { return support_; }

  /// Throws SingularFitError carrying `target` when fewer positively
  /// weighted rows than unknowns were added.
  LocalFitResult solve(double target = std::numeric_limits<double>::quiet_NaN()) const;

 private:
  Eigen::MatrixXd gram_;
  Eigen::VectorXd rhs_;
  double effective_n_ = 0.0;
  std::size_t support_ = 0;
};

/// Minimizes sum_r weights_r (y_r - row_r c)^2 k(distance_r / h) / h.
LocalFitResult local_linear_fit(const Eigen::MatrixXd& design, std::span<const double> responses,
                                std::span<const double> distances, double h,
                                std::span<const double> weights,
                                double target = std::numeric_limits<double>::quiet_NaN());

/// Kernel density estimate N^-1 sum k((x - pt)/h)/h.
double kde(std::span<const double> points, double h, double x);

}  // namespace svcam
