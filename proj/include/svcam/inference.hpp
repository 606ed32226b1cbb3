#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "svcam/dataset.hpp"
#include "svcam/peblle.hpp"
#include "svcam/splines.hpp"

namespace svcam {

enum class IntervalMethod { Unified, Sparse, Dense, Ultradense };

const char* to_string(IntervalMethod m);
IntervalMethod parse_method(const std::string& name);

/// Standard normal quantile and upper tail.
double normal_quantile(double p);
double normal_cdf(double x);

struct AuxBandwidths {
  double time = 0.0;                // 0: h_C * N^(1/20)
  std::vector<double> covariate;    // empty: h_A * N^(1/20) for every k
};

/// Plug-in nuisance quantities, tabulated on the fit's time grid.
struct NuisanceEstimates {
  std::vector<double> grid;
  std::vector<Eigen::MatrixXd> xi;
  std::vector<Eigen::MatrixXd> xi_inv;
  std::vector<bool> xi_ridged;
  std::vector<Eigen::MatrixXd> g_diag;
  std::vector<double> gamma_diag;
  std::vector<double> sigma2;
  std::vector<Eigen::VectorXd> rho1;
  std::vector<Eigen::VectorXd> alpha_second;  // q+1+p second derivatives per grid point

  // gamma(s, t) on surface_grid x surface_grid, bilinear in between
  std::vector<double> surface_grid;
  Eigen::MatrixXd gamma_surface;

  std::vector<PilotAdditive> beta_pilot;  // second derivatives of beta_k
  std::vector<double> mu;
  std::vector<double> psi1;
  std::vector<double> psi2;

  std::vector<double> times;                  // for f_T
  std::vector<std::vector<double>> covariates;  // for f_{X_k}
  double bandwidth_time = 0.0;
  std::vector<double> bandwidth_covariate;

  bool pairs_available = true;  // false: sparse interval only
  std::size_t truncations = 0;  // negative values set to zero

  Eigen::MatrixXd xi_at(double t) const;
  Eigen::MatrixXd xi_inv_at(double t) const;
  Eigen::MatrixXd g_at(double t) const;
  Eigen::VectorXd rho1_at(double t) const;
  double gamma_tt(double t) const;
  double gamma(double s, double t) const;
  double sigma2_at(double t) const;
  double f_t(double t) const;
  double f_x(std::size_t k, double x) const;
};

/// With `sparse_only`, data without within-subject pairs yields estimates
/// usable for the sparse interval; otherwise such data is an error.
NuisanceEstimates estimate_nuisance(const LongitudinalDataset& ds, const SemiVcamFit& fit,
                                    const AuxBandwidths& bw = {}, bool sparse_only = false);

/// Regime ratio N_H / n^(1/(2r)), used in place of the dense-case limit.
double regime_ratio(const SampleSummary& s, int r);

/// Variance matrix of the VC estimator from raw plug-ins.
Eigen::MatrixXd gamma_c_from(const Eigen::MatrixXd& xi_inv, double gamma_tt, double sigma2,
                             const Eigen::MatrixXd& g, double f_t, const SampleSummary& s, double h_c,
                             IntervalMethod method = IntervalMethod::Unified, int r = 2, double kappa = 0.6);

double gamma_a_from(double psi1, double psi2, double mu, double f_x, const SampleSummary& s, double h_a,
                    IntervalMethod method = IntervalMethod::Unified, int r = 2, double kappa = 0.6);

Eigen::MatrixXd gamma_C(double t, const NuisanceEstimates& ne, const SampleSummary& s, double h_c,
                        IntervalMethod method = IntervalMethod::Unified, int r = 2);

double gamma_A(std::size_t k, double x, const NuisanceEstimates& ne, const SampleSummary& s, double h_a,
               IntervalMethod method = IntervalMethod::Unified, int r = 2);

/// Symmetric positive semidefinite square root of (M + M^T) / 2.
Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& m);

struct BandPoint {
  double center = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct ConfidenceBand {
  std::string component;
  std::vector<double> grid;
  std::vector<double> center;
  std::vector<double> lower;
  std::vector<double> upper;
  double level = 0.95;
  IntervalMethod method = IntervalMethod::Unified;
};

/// Interval for vc component `c` (0..q: alpha_0l, q+1..: alpha_k) at t;
/// half-width z * sqrt(Gamma_C(t)_cc).
BandPoint ci_vc(const SemiVcamFit& fit, const NuisanceEstimates& ne, const SampleSummary& s, std::size_t c,
                double t, double level, IntervalMethod method = IntervalMethod::Unified, int r = 2);

BandPoint ci_additive(const SemiVcamFit& fit, const NuisanceEstimates& ne, const SampleSummary& s,
                      std::size_t k, double x, double level, IntervalMethod method = IntervalMethod::Unified,
                      int r = 2);

/// Bands for every component on the fit's own grids.
std::vector<ConfidenceBand> all_bands(const SemiVcamFit& fit, const NuisanceEstimates& ne,
                                      const SampleSummary& s, double level, IntervalMethod method,
                                      int r = 2);

std::string format_band_csv(const ConfidenceBand& band);

struct RegimeReport {
  int r = 2;
  double ratio = 0.0;
  std::string label;
  double lo = 0.5;
  double hi = 2.0;
};

RegimeReport classify_regime(const SampleSummary& s, int r = 2, double lo = 0.5, double hi = 2.0);

}  // namespace svcam
