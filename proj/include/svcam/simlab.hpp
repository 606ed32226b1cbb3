#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "svcam/dataset.hpp"
#include "svcam/inference.hpp"
#include "svcam/peblle.hpp"

namespace svcam {

enum class DgpKind { Example1, Dgp1, Dgp2 };

const char* to_string(DgpKind kind);
DgpKind parse_dgp(const std::string& name);

struct DgpSpec {
  DgpKind kind = DgpKind::Example1;
  std::size_t n = 50;
  std::size_t m = 10;
  double theta = 0.0;
  std::uint64_t seed = 1;
  bool random_effects = true;  // false: nu_i = 0
};

/// True components in the identified parametrization (mean-one alpha_k
/// under T ~ U(0,1), mean-zero beta_k under the law of X).
struct TruthBundle {
  std::vector<Curve1D> vc;        // alpha_00, alpha_01, alpha_1
  std::vector<Curve1D> additive;  // beta_1
  double sigma2 = 1.0;            // measurement error variance
  std::function<double(double, double)> gamma;  // random-effect covariance

  double mean(double t, double z, double x) const;
};

/// 4.5 sin(0.4 pi x); X is symmetric about zero, so its mean is zero.
double example_beta(double x);

TruthBundle truth_of(const DgpSpec& spec);

struct Simulated {
  LongitudinalDataset data;
  TruthBundle truth;
};

/// Subject i draws from stream (seed, i); deterministic for a fixed seed.
Simulated generate(const DgpSpec& spec);

/// The truth rewritten under the empirical constraints the estimator
/// enforces on `ds`: mean of beta_k over observations 0, mean of alpha_k
/// over observed times 1. The mean function is unchanged.
TruthBundle reidentify(const TruthBundle& truth, const LongitudinalDataset& ds);

/// Trapezoid integral of (est - truth)^2 over `count` equispaced points on
/// [lo, hi]; the orientation of the interval does not matter.
double integrated_squared_error(const Curve1D& estimate, const Curve1D& truth, double lo, double hi,
                                std::size_t count = 20);

/// Per component ISE of one fit: alpha_00, alpha_01, ..., alpha_k, beta_k,
/// over the observed ranges of T and X_k.
std::vector<double> component_ise(const SemiVcamFit& fit, const TruthBundle& truth,
                                  const LongitudinalDataset& ds, std::size_t count = 20);

/// SUBJ weighted squared discrepancy of fitted and true means,
/// sum_i m_i^-1 sum_j (fit - truth)^2.
double ase(const SemiVcamFit& fit, const TruthBundle& truth, const LongitudinalDataset& ds);

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_and_se(const std::vector<double>& values);
/// Proportion and its binomial standard error.
MeanSe proportion(std::size_t hits, std::size_t total);

/// Component names in the fit's order, e.g. alpha00, alpha01, alpha1, beta1.
std::vector<std::string> component_names(std::size_t q, std::size_t p);

struct Cell {
  std::size_t n = 0;
  std::size_t m = 0;
};

/// "50x10" style cells, comma separated.
Cell parse_cell(const std::string& text);
std::vector<Cell> parse_cells(const std::string& text);

struct ReportRow {
  std::vector<std::string> keys;
  double value = 0.0;
  double mcse = 0.0;
};

struct SimReport {
  std::string study;
  std::vector<std::string> key_names;
  std::vector<ReportRow> rows;
  std::size_t Q = 0;
  std::size_t failed = 0;
  std::vector<std::pair<std::string, std::string>> notes;  // bandwidths, knots per cell

  /// Tidy CSV: key columns, value, mcse.
  std::string to_csv() const;
  /// First row whose keys equal `keys`; throws when absent.
  const ReportRow& find(const std::vector<std::string>& keys) const;
};

struct StudyConfig {
  std::vector<Cell> cells;
  std::size_t Q = 100;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  bool per_replication_cv = false;
  std::size_t pilot_reps = 3;
  std::size_t cv_points = 9;
  std::optional<std::pair<double, double>> bandwidths;  // skips CV
  std::optional<std::pair<int, int>> knots;             // nullopt: BIC
};

/// Seed of replication r in cell c; pilot replications use r >= 1e6.
std::uint64_t replication_seed(std::uint64_t seed, std::size_t cell, std::size_t r);

/// Bandwidths minimizing the CV score summed over `pilot_reps` pilot
/// replications of the cell; knots from BIC on the first pilot replication
/// unless fixed.
std::pair<double, double> pilot_bandwidths(DgpKind kind, double theta, Cell cell, std::size_t cell_index,
                                           const StudyConfig& cfg);

/// Example 1 MPISE per component (keys n, m, component).
SimReport table1_study(const StudyConfig& cfg);

/// Example 1 AECP and AEL in percent and length units (keys n, m, component,
/// method, level, metric).
SimReport coverage_study(const StudyConfig& cfg, const std::vector<double>& levels,
                         const std::vector<IntervalMethod>& methods);

/// Rejection frequency with bootstrap p-values (keys dgp, n, m, theta,
/// level). Bandwidths are chosen per cell and theta; replications share
/// seeds across theta.
SimReport power_study(const StudyConfig& cfg, DgpKind kind, const std::vector<double>& thetas,
                      const std::vector<double>& levels, std::size_t B);

}  // namespace svcam
