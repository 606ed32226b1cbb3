#include "svcam/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <boost/math/distributions/normal.hpp>

#include "svcam/error.hpp"
#include "svcam/smoothing.hpp"

namespace svcam {

const char* to_string(IntervalMethod m) {
  switch (m) {
    case IntervalMethod::Unified: return "unified";
    case IntervalMethod::Sparse: return "sparse";
    case IntervalMethod::Dense: return "dense";
    case IntervalMethod::Ultradense: return "ultradense";
  }
  return "?";
}

IntervalMethod parse_method(const std::string& name) {
  if (name == "unified") return IntervalMethod::Unified;
  if (name == "sparse") return IntervalMethod::Sparse;
  if (name == "dense") return IntervalMethod::Dense;
  if (name == "ultradense") return IntervalMethod::Ultradense;
  throw Error(ErrorKind::Argument, "unknown interval method '" + name + "'");
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorKind::Argument, "normal quantile needs p in (0,1)");
  return boost::math::quantile(boost::math::normal(), p);
}

double normal_cdf(double x) { return boost::math::cdf(boost::math::normal(), x); }

namespace {

constexpr std::size_t kSurfacePoints = 51;

std::pair<std::size_t, double> bracket(const std::vector<double>& grid, double x) {
  if (grid.size() == 1) return {0, 0.0};
  x = std::clamp(x, grid.front(), grid.back());
  auto it = std::upper_bound(grid.begin(), grid.end(), x);
  std::size_t lo = std::clamp<std::size_t>(static_cast<std::size_t>(it - grid.begin()), 1, grid.size() - 1) - 1;
  return {lo, (x - grid[lo]) / (grid[lo + 1] - grid[lo])};
}

template <typename T>
T lerp_table(const std::vector<T>& table, const std::vector<double>& grid, double x) {
  const auto [lo, w] = bracket(grid, x);
  if (grid.size() == 1) return table[0];
  return (1.0 - w) * table[lo] + w * table[lo + 1];
}

Eigen::MatrixXd robust_inverse(const Eigen::MatrixXd& m, bool& ridged) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
  ridged = !(lo > 0.0) || hi / lo > 1e12;
  if (!ridged) return es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  const double ridge = 1e-8 * std::max(m.trace(), 1e-300) / static_cast<double>(m.rows());
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).array() + ridge;
  return es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

double truncate(double v, std::size_t& counter) {
  if (v < 0.0) {
    ++counter;
    return 0.0;
  }
  return v;
}

}  // namespace

Eigen::MatrixXd NuisanceEstimates::xi_at(double t) const { return lerp_table(xi, grid, t); }
Eigen::MatrixXd NuisanceEstimates::xi_inv_at(double t) const { return lerp_table(xi_inv, grid, t); }
Eigen::MatrixXd NuisanceEstimates::g_at(double t) const { return lerp_table(g_diag, grid, t); }
Eigen::VectorXd NuisanceEstimates::rho1_at(double t) const { return lerp_table(rho1, grid, t); }
double NuisanceEstimates::gamma_tt(double t) const { return lerp_table(gamma_diag, grid, t); }
double NuisanceEstimates::sigma2_at(double t) const { return lerp_table(sigma2, grid, t); }

double NuisanceEstimates::gamma(double s, double t) const {
  if (!pairs_available) return 0.0;
  const auto [i, a] = bracket(surface_grid, s);
  const auto [j, b] = bracket(surface_grid, t);
  const auto I = static_cast<Eigen::Index>(i), J = static_cast<Eigen::Index>(j);
  return (1 - a) * (1 - b) * gamma_surface(I, J) + a * (1 - b) * gamma_surface(I + 1, J) +
         (1 - a) * b * gamma_surface(I, J + 1) + a * b * gamma_surface(I + 1, J + 1);
}

double NuisanceEstimates::f_t(double t) const { return kde(times, bandwidth_time, t); }

double NuisanceEstimates::f_x(std::size_t k, double x) const {
  return kde(covariates.at(k), bandwidth_covariate.at(k), x);
}

NuisanceEstimates estimate_nuisance(const LongitudinalDataset& ds, const SemiVcamFit& fit, const AuxBandwidths& bw,
                                    bool sparse_only) {
  const std::size_t q = ds.q(), p = ds.p(), N = ds.N(), n = ds.n();
  const std::size_t d = q + 1 + p;
  if (fit.vc_curves.size() != d || fit.additive_curves.size() != p)
    throw Error(ErrorKind::Argument, "fit does not match the dataset dimensions");
  const double inflate = std::pow(static_cast<double>(N), 1.0 / 20.0);

  NuisanceEstimates ne;
  ne.grid = fit.vc_curves[0].grid;
  ne.bandwidth_time = bw.time > 0.0 ? bw.time : fit.h_c * inflate;
  ne.bandwidth_covariate = bw.covariate;
  if (ne.bandwidth_covariate.empty()) ne.bandwidth_covariate.assign(p, fit.h_a * inflate);
  if (ne.bandwidth_covariate.size() != p) throw Error(ErrorKind::Argument, "one covariate bandwidth per covariate");
  ne.times.assign(ds.times().begin(), ds.times().end());
  for (std::size_t k = 0; k < p; ++k) ne.covariates.push_back(ds.x_column(k));

  bool any_pairs = false;
  for (std::size_t i = 0; i < n; ++i) any_pairs = any_pairs || ds.m(i) > 1;
  if (!any_pairs && !sparse_only)
    throw Error(ErrorKind::Unavailable,
                "no subject has repeated measurements; within-subject covariances are unavailable, use the sparse "
                "interval");
  ne.pairs_available = any_pairs;

  // F rows and residuals.
  Eigen::MatrixXd F(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(d));
  std::vector<double> resid(N);
  for (std::size_t r = 0; r < N; ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    F(ri, 0) = 1.0;
    for (std::size_t l = 0; l < q; ++l) F(ri, l + 1) = ds.z(r, l);
    for (std::size_t k = 0; k < p; ++k) F(ri, q + 1 + k) = fit.additive_curves[k].clamped(ds.x(r, k));
    double fitted = fit.vc_curves[0].clamped(ds.t(r));
    for (std::size_t l = 0; l < q; ++l) fitted += ds.z(r, l) * fit.vc_curves[l + 1].clamped(ds.t(r));
    for (std::size_t k = 0; k < p; ++k) fitted += fit.vc_curves[q + 1 + k].clamped(ds.t(r)) * F(ri, q + 1 + k);
    resid[r] = ds.y(r) - fitted;
  }

  const double h = ne.bandwidth_time;
  const std::size_t G = ne.grid.size();

  // Within-subject pair smoothing of gamma on a coarse surface grid,
  // each subject weighted by 1 / (m_i (m_i - 1)).
  if (any_pairs) {
    ne.surface_grid = linspace(ne.grid.front(), ne.grid.back(), kSurfacePoints);
    const auto S = static_cast<Eigen::Index>(kSurfacePoints);
    Eigen::MatrixXd num = Eigen::MatrixXd::Zero(S, S), den = Eigen::MatrixXd::Zero(S, S);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t m = ds.m(i);
      if (m < 2) continue;
      const double wi = 1.0 / (static_cast<double>(m) * static_cast<double>(m - 1));
      Eigen::MatrixXd K(static_cast<Eigen::Index>(m), S);
      for (std::size_t j = 0; j < m; ++j)
        for (Eigen::Index g = 0; g < S; ++g)
          K(static_cast<Eigen::Index>(j), g) = kernel_h(ds.t(ds.offset(i) + j) - ne.surface_grid[g], h);
      Eigen::VectorXd rv(static_cast<Eigen::Index>(m));
      for (std::size_t j = 0; j < m; ++j) rv[static_cast<Eigen::Index>(j)] = resid[ds.offset(i) + j];
      const Eigen::VectorXd a = K.transpose() * rv;
      const Eigen::VectorXd b = K.transpose() * Eigen::VectorXd::Ones(static_cast<Eigen::Index>(m));
      num += wi * (a * a.transpose() - K.transpose() * rv.cwiseAbs2().asDiagonal() * K);
      den += wi * (b * b.transpose() - K.transpose() * K);
    }
    ne.gamma_surface.resize(S, S);
    for (Eigen::Index a = 0; a < S; ++a)
      for (Eigen::Index b = 0; b < S; ++b) ne.gamma_surface(a, b) = den(a, b) > 0.0 ? num(a, b) / den(a, b) : 0.0;
    // Fill empty cells from their nearest populated neighbour on the same row.
    for (Eigen::Index a = 0; a < S; ++a)
      for (Eigen::Index b = 0; b < S; ++b)
        if (!(den(a, b) > 0.0)) {
          for (Eigen::Index off = 1; off < S; ++off) {
            if (b - off >= 0 && den(a, b - off) > 0.0) { ne.gamma_surface(a, b) = ne.gamma_surface(a, b - off); break; }
            if (b + off < S && den(a, b + off) > 0.0) { ne.gamma_surface(a, b) = ne.gamma_surface(a, b + off); break; }
          }
        }
  }

  // Time-grid smooths: Xi, G(t,t), r^2.
  ne.xi.resize(G);
  ne.xi_inv.resize(G);
  ne.xi_ridged.resize(G);
  ne.g_diag.resize(G);
  ne.gamma_diag.resize(G);
  ne.sigma2.resize(G);
  for (std::size_t g = 0; g < G; ++g) {
    const double t0 = ne.grid[g];
    Eigen::MatrixXd xi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    Eigen::MatrixXd gnum = xi;
    double wsum = 0.0, r2 = 0.0, gden = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t m = ds.m(i);
      Eigen::VectorXd A = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
      Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
      double ksum = 0.0, k2sum = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const std::size_t r = ds.offset(i) + j;
        const double kw = kernel_h(ds.t(r) - t0, h);
        if (kw <= 0.0) continue;
        const auto row = F.row(static_cast<Eigen::Index>(r)).transpose();
        xi.noalias() += ds.w(r) * kw * row * row.transpose();
        wsum += ds.w(r) * kw;
        r2 += ds.w(r) * kw * resid[r] * resid[r];
        A += kw * row;
        diag.noalias() += kw * kw * row * row.transpose();
        ksum += kw;
        k2sum += kw * kw;
      }
      if (m > 1 && ksum > 0.0) {
        const double wi = 1.0 / (static_cast<double>(m) * static_cast<double>(m - 1));
        gnum += wi * (A * A.transpose() - diag);
        gden += wi * (ksum * ksum - k2sum);
      }
    }
    if (!(wsum > 0.0))
      throw Error(ErrorKind::Degenerate, "no observations within the nuisance bandwidth of t = " + std::to_string(t0));
    ne.xi[g] = xi / wsum;
    bool ridged = false;
    ne.xi_inv[g] = robust_inverse(ne.xi[g], ridged);
    ne.xi_ridged[g] = ridged;
    ne.g_diag[g] = gden > 0.0 ? Eigen::MatrixXd(gnum / gden) : ne.xi[g];
    const double gtt = any_pairs ? ne.gamma(t0, t0) : 0.0;
    ne.gamma_diag[g] = truncate(gtt, ne.truncations);
    ne.sigma2[g] = truncate(r2 / wsum - ne.gamma_diag[g], ne.truncations);
  }

  // Bias ingredients from the pilot spline.
  const PilotCoefficients pc = pilot_coefficients(fit.pilot, ds);
  ne.alpha_second.resize(G);
  ne.rho1.resize(G);
  for (std::size_t g = 0; g < G; ++g) {
    Eigen::VectorXd a2(static_cast<Eigen::Index>(d));
    for (std::size_t c = 0; c < d; ++c) a2[static_cast<Eigen::Index>(c)] = pc.second_derivative(c, ne.grid[g]);
    ne.alpha_second[g] = a2;
    ne.rho1[g] = ne.xi[g] * a2;  // sum of alpha'' times the columns of Xi
  }
  for (std::size_t k = 0; k < p; ++k) ne.beta_pilot.push_back(pilot_beta(fit.pilot, ds, k, {}));

  // mu, psi1, psi2 as SUBJ means.
  ne.mu.assign(p, 0.0);
  ne.psi1.assign(p, 0.0);
  ne.psi2.assign(p, 0.0);
  for (std::size_t k = 0; k < p; ++k) {
    const auto& alpha = fit.vc_curves[q + 1 + k];
    double mu = 0.0, psi1 = 0.0, psi2 = 0.0;
    std::size_t pair_subjects = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t m = ds.m(i);
      double smu = 0.0, spsi = 0.0, spair = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const double t = ds.t(ds.offset(i) + j);
        const double a = alpha.clamped(t);
        smu += a * a;
        spsi += a * a * (ne.gamma_tt(t) + ne.sigma2_at(t));
        if (any_pairs)
          for (std::size_t v = 0; v < m; ++v)
            if (v != j) {
              const double tv = ds.t(ds.offset(i) + v);
              spair += a * alpha.clamped(tv) * ne.gamma(t, tv);
            }
      }
      mu += smu / static_cast<double>(m);
      psi1 += spsi / static_cast<double>(m);
      if (m > 1) {
        psi2 += spair / (static_cast<double>(m) * static_cast<double>(m - 1));
        ++pair_subjects;
      }
    }
    ne.mu[k] = mu / static_cast<double>(n);
    ne.psi1[k] = psi1 / static_cast<double>(n);
    ne.psi2[k] = pair_subjects ? truncate(psi2 / static_cast<double>(pair_subjects), ne.truncations) : 0.0;
    if (!(ne.mu[k] > 0.0)) throw Error(ErrorKind::Degenerate, "estimated E[alpha_k^2] is not positive");
  }
  return ne;
}

double regime_ratio(const SampleSummary& s, int r) {
  if (r < 1) throw Error(ErrorKind::Argument, "smoothness order r must be at least 1");
  return s.nbar_h / std::pow(static_cast<double>(s.n), 1.0 / (2.0 * r));
}

Eigen::MatrixXd gamma_c_from(const Eigen::MatrixXd& xi_inv, double gamma_tt, double sigma2, const Eigen::MatrixXd& g,
                             double f_t, const SampleSummary& s, double h_c, IntervalMethod method, int r,
                             double kappa) {
  if (!(f_t >= 1e-6))
    throw Error(ErrorKind::Domain, "time density estimate below 1e-6; the point lies outside the data support");
  const double n = static_cast<double>(s.n);
  const Eigen::MatrixXd sigma_s = xi_inv * (gamma_tt + sigma2);
  const Eigen::MatrixXd sigma_d = xi_inv * gamma_tt * g * xi_inv;
  const Eigen::MatrixXd sparse = kappa / (n * s.nbar_h * h_c * f_t) * sigma_s;
  const Eigen::MatrixXd dense_part = (1.0 - 1.0 / s.nbar_h) / n * sigma_d;
  Eigen::MatrixXd out;
  switch (method) {
    case IntervalMethod::Unified: out = sparse + dense_part; break;
    case IntervalMethod::Sparse: out = sparse; break;
    case IntervalMethod::Dense: out = (kappa / (f_t * regime_ratio(s, r)) * sigma_s + sigma_d) / n; break;
    case IntervalMethod::Ultradense: out = dense_part; break;
  }
  return 0.5 * (out + out.transpose());
}

double gamma_a_from(double psi1, double psi2, double mu, double f_x, const SampleSummary& s, double h_a,
                    IntervalMethod method, int r, double kappa) {
  if (!(f_x >= 1e-6))
    throw Error(ErrorKind::Domain, "covariate density estimate below 1e-6; the point lies outside the data support");
  const double n = static_cast<double>(s.n);
  psi2 = std::max(psi2, 0.0);
  const double sparse = kappa * psi1 / (n * s.nbar_h * h_a * f_x);
  const double dense_part = (1.0 - 1.0 / s.nbar_h) / n * psi2 / (mu * mu);
  switch (method) {
    case IntervalMethod::Unified: return sparse + dense_part;
    case IntervalMethod::Sparse: return sparse;
    case IntervalMethod::Dense: return (kappa * psi1 / (f_x * regime_ratio(s, r)) + psi2 / (mu * mu)) / n;
    case IntervalMethod::Ultradense: return dense_part;
  }
  return sparse + dense_part;
}

namespace {
void require_pairs(const NuisanceEstimates& ne, IntervalMethod method) {
  if (!ne.pairs_available && method != IntervalMethod::Sparse)
    throw Error(ErrorKind::Unavailable, std::string("the ") + to_string(method) +
                                            " interval needs within-subject pairs; use the sparse interval");
}
}  // namespace

Eigen::MatrixXd gamma_C(double t, const NuisanceEstimates& ne, const SampleSummary& s, double h_c,
                        IntervalMethod method, int r) {
  require_pairs(ne, method);
  return gamma_c_from(ne.xi_inv_at(t), ne.gamma_tt(t), ne.sigma2_at(t), ne.g_at(t), ne.f_t(t), s, h_c, method, r);
}

double gamma_A(std::size_t k, double x, const NuisanceEstimates& ne, const SampleSummary& s, double h_a,
               IntervalMethod method, int r) {
  require_pairs(ne, method);
  return gamma_a_from(ne.psi1.at(k), ne.psi2.at(k), ne.mu.at(k), ne.f_x(k, x), s, h_a, method, r);
}

Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

namespace {
double z_of(double level) {
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorKind::Argument, "confidence level must lie in (0,1)");
  return normal_quantile(0.5 + level / 2.0);
}
}  // namespace

BandPoint ci_vc(const SemiVcamFit& fit, const NuisanceEstimates& ne, const SampleSummary& s, std::size_t c, double t,
                double level, IntervalMethod method, int r) {
  if (c >= fit.vc_curves.size()) throw Error(ErrorKind::Argument, "component index out of range");
  const double z = z_of(level);
  const auto kc = kernel_constants();
  const Eigen::VectorXd bias = ne.xi_inv_at(t) * ne.rho1_at(t);
  const double center =
      fit.vc_curves[c](t) - 0.5 * fit.h_c * fit.h_c * kc.kappa2 * bias[static_cast<Eigen::Index>(c)];
  const Eigen::MatrixXd g = gamma_C(t, ne, s, fit.h_c, method, r);
  const double half = z * std::sqrt(std::max(g(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c)), 0.0));
  return {center, center - half, center + half};
}

BandPoint ci_additive(const SemiVcamFit& fit, const NuisanceEstimates& ne, const SampleSummary& s, std::size_t k,
                      double x, double level, IntervalMethod method, int r) {
  if (k >= fit.additive_curves.size()) throw Error(ErrorKind::Argument, "component index out of range");
  const double z = z_of(level);
  const auto kc = kernel_constants();
  const double center = fit.additive_curves[k](x) -
                        0.5 * ne.beta_pilot.at(k).second_derivative(x) * fit.h_a * fit.h_a * kc.kappa2 / ne.mu.at(k);
  const double half = z * std::sqrt(std::max(gamma_A(k, x, ne, s, fit.h_a, method, r), 0.0));
  return {center, center - half, center + half};
}

std::vector<ConfidenceBand> all_bands(const SemiVcamFit& fit, const NuisanceEstimates& ne, const SampleSummary& s,
                                      double level, IntervalMethod method, int r) {
  std::vector<ConfidenceBand> out;
  std::vector<std::string> names;
  for (std::size_t l = 0; l <= fit.q; ++l) names.push_back("alpha0" + std::to_string(l));
  for (std::size_t k = 1; k <= fit.p; ++k) names.push_back("alpha" + std::to_string(k));
  for (std::size_t c = 0; c < fit.vc_curves.size(); ++c) {
    ConfidenceBand b{names[c], fit.vc_curves[c].grid, {}, {}, {}, level, method};
    for (double t : b.grid) {
      const auto pt = ci_vc(fit, ne, s, c, t, level, method, r);
      b.center.push_back(pt.center);
      b.lower.push_back(pt.lower);
      b.upper.push_back(pt.upper);
    }
    out.push_back(std::move(b));
  }
  for (std::size_t k = 0; k < fit.p; ++k) {
    ConfidenceBand b{"beta" + std::to_string(k + 1), fit.additive_curves[k].grid, {}, {}, {}, level, method};
    for (double x : b.grid) {
      const auto pt = ci_additive(fit, ne, s, k, x, level, method, r);
      b.center.push_back(pt.center);
      b.lower.push_back(pt.lower);
      b.upper.push_back(pt.upper);
    }
    out.push_back(std::move(b));
  }
  return out;
}

std::string format_band_csv(const ConfidenceBand& band) {
  std::string out = "grid,center,lower,upper,method,level\n";
  char buf[256];
  for (std::size_t g = 0; g < band.grid.size(); ++g) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%s,%.17g\n", band.grid[g], band.center[g], band.lower[g],
                  band.upper[g], to_string(band.method), band.level);
    out += buf;
  }
  return out;
}

RegimeReport classify_regime(const SampleSummary& s, int r, double lo, double hi) {
  RegimeReport rep;
  rep.r = r;
  rep.lo = lo;
  rep.hi = hi;
  rep.ratio = regime_ratio(s, r);
  rep.label = rep.ratio < lo ? "sparse" : (rep.ratio > hi ? "ultradense" : "dense");
  return rep;
}

}  // namespace svcam
