#pragma once

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "svcam/dataset.hpp"
#include "svcam/splines.hpp"

namespace svcam {

using Curve1D = std::function<double(double)>;

/// A component function tabulated on a strictly increasing grid.
struct ComponentCurve {
  std::vector<double> grid;
  std::vector<double> values;
  std::vector<double> slope_values;
  double bandwidth = 0.0;

  /// Linear interpolation; throws an extrapolation error outside the grid.
  double operator()(double x) const;
  /// Linear interpolation with constant continuation past the ends.
  double clamped(double x) const;
  double slope(double x) const;
};

std::vector<double> linspace(double lo, double hi, std::size_t count);

struct NormalizationReport {
  std::vector<double> beta_center;   // subtracted from beta_k, absorbed into the trend
  std::vector<double> alpha_scale;   // alpha_k divided by it, beta_k multiplied
  std::vector<double> refit_scale;   // second rescaling after the final VC refit
  bool refit = false;
  std::size_t filled_targets = 0;    // singular grid targets filled by interpolation
  std::size_t total_targets = 0;
  std::size_t singleton_subjects = 0;  // m_i = 1, no within-subject pairs
  double boundary_margin_c = 0.0;      // outer margin (= h_C) outside interior asymptotics
  std::vector<double> boundary_margin_a;
};

struct FitConfig {
  std::optional<double> h_c;  // nullopt: cross-validation
  std::optional<double> h_a;
  std::optional<std::pair<int, int>> knots;  // nullopt: BIC
  std::size_t grid_size = 101;
  bool vc_refit_after_additive = true;
  int order = 4;
  std::vector<int> knot_grid_c{1, 2, 3, 4, 5};
  std::vector<int> knot_grid_a{1, 2, 3, 4, 5};
  std::vector<double> bandwidth_grid_c;  // empty: default grid over the support
  std::vector<double> bandwidth_grid_a;
  unsigned threads = 1;
};

/// Fitted Semi-VCAM. vc_curves holds alpha_00..alpha_0q then alpha_1..alpha_p.
struct SemiVcamFit {
  std::size_t q = 0;
  std::size_t p = 0;
  std::vector<ComponentCurve> vc_curves;
  std::vector<ComponentCurve> additive_curves;
  double h_c = 0.0;
  double h_a = 0.0;
  PilotFit pilot;
  NormalizationReport normalization;

  /// z excludes the intercept; x has length p.
  double predict(double t, const Eigen::VectorXd& z, const Eigen::VectorXd& x) const;
  double predict_clamped(double t, const Eigen::VectorXd& z, const Eigen::VectorXd& x) const;
};

/// Intercept block of the local linear VC fit at t given known betas.
Eigen::VectorXd vc_step(const LongitudinalDataset& ds, const std::vector<Curve1D>& betas, double h_c, double t);

/// Local linear additive fit at x for component k; returns (level, slope).
/// `vc` holds q+1+p coefficient functions; betas_other[k] is ignored.
std::pair<double, double> additive_step(const LongitudinalDataset& ds, const std::vector<Curve1D>& vc,
                                        const std::vector<Curve1D>& betas_other, double h_a,
                                        std::size_t k, double x);

/// Fit with explicit bandwidths and a prepared pilot; `time_grid` and
/// `x_grids` fix the evaluation abscissae.
SemiVcamFit fit_with_pilot(const LongitudinalDataset& ds, PilotFit pilot, double h_c, double h_a,
                           const std::vector<double>& time_grid,
                           const std::vector<std::vector<double>>& x_grids, bool refit);

SemiVcamFit fit(const LongitudinalDataset& ds, const FitConfig& cfg);

struct CvResult {
  double h_c = 0.0;
  double h_a = 0.0;
  double score = 0.0;
  std::vector<double> grid_c;
  std::vector<double> grid_a;
  Eigen::MatrixXd scores;  // grid_c x grid_a, +inf for failed cells
};

/// Leave-one-subject-out CV over the full pipeline (pilot included).
CvResult cv_bandwidths(const LongitudinalDataset& ds, const std::vector<double>& grid_c,
                       const std::vector<double>& grid_a, std::pair<int, int> knots, int order = 4,
                       std::size_t grid_size = 101, bool refit = true, unsigned threads = 1);

std::vector<double> default_bandwidth_grid(const Interval& support, double lo_frac, double hi_frac,
                                           std::size_t count);

double predict(const SemiVcamFit& fit, double t, const Eigen::VectorXd& z, const Eigen::VectorXd& x);

/// Empirical means over all observations of alpha_k(T) and beta_k(X_k).
std::pair<std::vector<double>, std::vector<double>> identification_means(const SemiVcamFit& fit,
                                                                         const LongitudinalDataset& ds);

}  // namespace svcam
