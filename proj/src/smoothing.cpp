#include "svcam/smoothing.hpp"

#include <sstream>

#include "svcam/error.hpp"

namespace svcam {

KernelConstants kernel_constants(const KernelSpec& spec) {
  if (spec.family != KernelFamily::Epanechnikov || spec.support_radius != 1.0)
    throw Error(ErrorKind::Argument, "only the unit Epanechnikov kernel is supported");
  // Closed-form moments of 0.75(1-u^2) on [-1,1].
  return {3.0 / 5.0, 1.0 / 5.0, 3.0 / 35.0, 3.0 / 35.0};
}

NormalEquations::NormalEquations(Eigen::Index dim)
    : gram_(Eigen::MatrixXd::Zero(dim, dim)), rhs_(Eigen::VectorXd::Zero(dim)) {}

LocalFitResult NormalEquations::solve(double target) const {
  const Eigen::Index d = dim();
  if (support_ < static_cast<std::size_t>(d)) {
    std::ostringstream msg;
    msg << "local fit at " << target << " has " << support_ << " supporting rows for " << d
        << " unknowns; widen the bandwidth";
    throw SingularFitError(target, msg.str());
  }
  LocalFitResult res;
  res.gram = gram_.selfadjointView<Eigen::Lower>();
  res.effective_n = effective_n_;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(res.gram, Eigen::EigenvaluesOnly);
  const double max_ev = eig.eigenvalues().maxCoeff();
  const double min_ev = eig.eigenvalues().minCoeff();
  Eigen::MatrixXd a = res.gram;
  if (!(max_ev > 0.0)) {
    throw SingularFitError(target, "local fit at " + std::to_string(target) + " has a zero gram matrix");
  }
  if (min_ev <= 0.0 || max_ev / min_ev > 1e12) {
    a.diagonal().array() += 1e-8 * a.trace() / static_cast<double>(d);
    res.ridged = true;
  }
  res.coefficients = a.ldlt().solve(rhs_);
  if (!res.coefficients.allFinite())
    throw SingularFitError(target, "local fit at " + std::to_string(target) + " did not produce finite coefficients");
  return res;
}

LocalFitResult local_linear_fit(const Eigen::MatrixXd& design, std::span<const double> responses,
                                std::span<const double> distances, double h,
                                std::span<const double> weights, double target) {
  if (!(h > 0.0)) throw Error(ErrorKind::Argument, "bandwidth must be positive");
  const auto rows = static_cast<std::size_t>(design.rows());
  if (responses.size() != rows || distances.size() != rows || weights.size() != rows)
    throw Error(ErrorKind::Argument, "local_linear_fit: row counts differ");
  NormalEquations ne(design.cols());
  for (std::size_t r = 0; r < rows; ++r) {
    const double kw = kernel_h(distances[r], h);
    if (kw == 0.0) continue;
    ne.add(design.row(static_cast<Eigen::Index>(r)).transpose(), responses[r], weights[r] * kw);
  }
  return ne.solve(target);
}

double kde(std::span<const double> points, double h, double x) {
  if (points.empty()) throw Error(ErrorKind::EmptyData, "kde needs at least one point");
  if (!(h > 0.0)) throw Error(ErrorKind::Argument, "bandwidth must be positive");
  double acc = 0.0;
  for (double pt : points) acc += kernel_eval((x - pt) / h);
  return acc / (static_cast<double>(points.size()) * h);
}

}  // namespace svcam
