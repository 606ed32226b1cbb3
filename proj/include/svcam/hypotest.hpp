#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "svcam/dataset.hpp"
#include "svcam/peblle.hpp"

namespace svcam {

enum class TestKind { TimeVarying, Linearity };

const char* to_string(TestKind kind);
TestKind parse_test_kind(const std::string& name);

/// Constant-coefficient null: Y = S' a with S = (1, Z, beta_1(X_1), ...).
struct NullFitC {
  Eigen::VectorXd a_tilde;
  std::vector<double> fitted;
  std::vector<double> residuals;
};

NullFitC fit_null_constant(const LongitudinalDataset& ds, const std::vector<Curve1D>& betas);

/// Varying-coefficient null: beta_k(x) = x, local linear fit over time.
struct NullFitA {
  std::vector<ComponentCurve> vc_tilde;
  std::vector<double> fitted;
  std::vector<double> residuals;
};

NullFitA fit_null_vcm(const LongitudinalDataset& ds, double h_c, std::size_t grid_size = 101);

/// Unnormalized product kernel k(dt/h_C) prod_k k(dx_k/h_A).
double pair_weight(double t_a, std::span<const double> x_a, double t_b, std::span<const double> x_b, double h_c,
                   double h_a);

/// Nonzero weights between observations of different subjects, a < b.
struct PairWeights {
  std::vector<std::uint32_t> a;
  std::vector<std::uint32_t> b;
  std::vector<double> w;
  double h_c = 0.0;
  double h_a = 0.0;
  std::size_t p = 0;
};

PairWeights pair_weights(const LongitudinalDataset& ds, double h_c, double h_a);

struct QuadStat {
  double stat = 0.0;    // J_n (or I_n)
  double z = 0.0;
  double sigma1 = 0.0;  // square root of the printed variance estimator
};

QuadStat stat_quadratic(const PairWeights& pw, std::span<const double> residuals, const SampleSummary& s);
QuadStat stat_quadratic(const LongitudinalDataset& ds, std::span<const double> residuals, double h_c, double h_a);

struct TestConfig {
  double h_c = 0.0;
  double h_a = 0.0;
  std::size_t B = 199;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::size_t grid_size = 101;
};

/// Test bandwidths from estimation bandwidths: h * N^(-1/20).
std::pair<double, double> test_bandwidths(const LongitudinalDataset& ds, double h_c, double h_a);

struct TestResult {
  TestKind which = TestKind::TimeVarying;
  double stat = 0.0;
  double z = 0.0;
  double sigma1 = 0.0;
  double p_asymptotic = 1.0;
  double p_bootstrap = 1.0;
  std::vector<double> boot_stats;
  std::size_t dropped = 0;
  double h_c = 0.0;
  double h_a = 0.0;
  std::size_t B = 0;
  std::uint64_t seed = 0;
};

/// Re-estimates the additive curves on a bootstrap sample.
using BetaProvider = std::function<std::vector<Curve1D>(const LongitudinalDataset&)>;

/// Subject-level wild bootstrap: Y* = null fit + xi_i * residual with
/// Rademacher xi_i drawn from stream (seed, b). `betas` feed the constant
/// null (time-varying test) and are ignored by the linearity test. With a
/// provider, each replicate refits the additive curves before the null fit.
TestResult bootstrap_test(const LongitudinalDataset& ds, TestKind which, const TestConfig& cfg,
                          const std::vector<Curve1D>& betas = {}, const BetaProvider& provider = {});

}  // namespace svcam
