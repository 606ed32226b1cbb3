#include "svcam/hypotest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "svcam/error.hpp"
#include "svcam/inference.hpp"
#include "svcam/parallel.hpp"
#include "svcam/smoothing.hpp"

namespace svcam {

const char* to_string(TestKind kind) {
  return kind == TestKind::TimeVarying ? "time-varying" : "linearity";
}

TestKind parse_test_kind(const std::string& name) {
  if (name == "time-varying") return TestKind::TimeVarying;
  if (name == "linearity") return TestKind::Linearity;
  throw Error(ErrorKind::Argument, "unknown test '" + name + "' (expected time-varying or linearity)");
}

NullFitC fit_null_constant(const LongitudinalDataset& ds, const std::vector<Curve1D>& betas) {
  if (betas.size() != ds.p()) throw Error(ErrorKind::Argument, "one beta per continuous covariate");
  const std::size_t d = ds.q() + 1 + ds.p();
  Eigen::MatrixXd S(static_cast<Eigen::Index>(ds.N()), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < ds.N(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    S(ri, 0) = 1.0;
    for (std::size_t l = 0; l < ds.q(); ++l) S(ri, l + 1) = ds.z(r, l);
    for (std::size_t k = 0; k < ds.p(); ++k) S(ri, ds.q() + 1 + k) = betas[k](ds.x(r, k));
  }
  const Eigen::Map<const Eigen::VectorXd> y(ds.responses().data(), static_cast<Eigen::Index>(ds.N()));
  const Eigen::MatrixXd gram = S.transpose() * S;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
  if (!(lo > 1e-12 * hi) || ldlt.info() != Eigen::Success)
    throw Error(ErrorKind::SingularFit, "constant-coefficient null design is singular");
  NullFitC out;
  out.a_tilde = ldlt.solve(S.transpose() * y);
  const Eigen::VectorXd fitted = S * out.a_tilde;
  out.fitted.assign(fitted.data(), fitted.data() + fitted.size());
  out.residuals.resize(ds.N());
  for (std::size_t r = 0; r < ds.N(); ++r) out.residuals[r] = ds.y(r) - out.fitted[r];
  return out;
}

NullFitA fit_null_vcm(const LongitudinalDataset& ds, double h_c, std::size_t grid_size) {
  if (!(h_c > 0.0)) throw Error(ErrorKind::Argument, "bandwidth must be positive");
  const std::size_t p = ds.p(), q = ds.q();
  const auto grid = linspace(ds.time_support().lo, ds.time_support().hi, grid_size);
  NullFitA out;
  out.vc_tilde.resize(q + 1 + p);
  for (auto& c : out.vc_tilde) {
    c.grid = grid;
    c.bandwidth = h_c;
    c.values.resize(grid.size());
    c.slope_values.resize(grid.size());
  }
  // Local linear fit per grid point with regressors (1, Z, X).
  const std::size_t d = q + 1 + p;
  std::vector<std::size_t> order(ds.N());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return ds.t(a) < ds.t(b); });
  std::vector<double> sorted_t(ds.N());
  for (std::size_t r = 0; r < ds.N(); ++r) sorted_t[r] = ds.t(order[r]);
  std::vector<bool> ok(grid.size(), false);
  std::size_t failed = 0;
  Eigen::VectorXd row(static_cast<Eigen::Index>(2 * d));
  for (std::size_t g = 0; g < grid.size(); ++g) {
    NormalEquations ne(static_cast<Eigen::Index>(2 * d));
    auto it = std::lower_bound(sorted_t.begin(), sorted_t.end(), grid[g] - h_c);
    for (auto s = static_cast<std::size_t>(it - sorted_t.begin()); s < sorted_t.size() && sorted_t[s] <= grid[g] + h_c;
         ++s) {
      const std::size_t r = order[s];
      const double dist = ds.t(r) - grid[g];
      const double kw = kernel_h(dist, h_c);
      if (kw <= 0.0) continue;
      row[0] = 1.0;
      for (std::size_t l = 0; l < q; ++l) row[static_cast<Eigen::Index>(l + 1)] = ds.z(r, l);
      for (std::size_t k = 0; k < p; ++k) row[static_cast<Eigen::Index>(q + 1 + k)] = ds.x(r, k);
      row.tail(static_cast<Eigen::Index>(d)) = dist * row.head(static_cast<Eigen::Index>(d));
      ne.add(row, ds.y(r), ds.w(r) * kw);
    }
    try {
      const auto res = ne.solve(grid[g]);
      for (std::size_t c = 0; c < d; ++c) {
        out.vc_tilde[c].values[g] = res.coefficients[static_cast<Eigen::Index>(c)];
        out.vc_tilde[c].slope_values[g] = res.coefficients[static_cast<Eigen::Index>(d + c)];
      }
      ok[g] = true;
    } catch (const SingularFitError&) {
      ++failed;
    }
  }
  if (static_cast<double>(failed) > 0.05 * static_cast<double>(grid.size()))
    throw SingularFitError(grid.front(), "varying-coefficient null fit: " + std::to_string(failed) +
                                             " singular grid targets; widen the bandwidth");
  for (std::size_t g = 0; g < grid.size(); ++g) {
    if (ok[g]) continue;
    std::ptrdiff_t lo = static_cast<std::ptrdiff_t>(g) - 1, hi = static_cast<std::ptrdiff_t>(g) + 1;
    while (lo >= 0 && !ok[static_cast<std::size_t>(lo)]) --lo;
    while (hi < static_cast<std::ptrdiff_t>(grid.size()) && !ok[static_cast<std::size_t>(hi)]) ++hi;
    for (auto& c : out.vc_tilde) {
      if (lo < 0) {
        c.values[g] = c.values[static_cast<std::size_t>(hi)];
        c.slope_values[g] = c.slope_values[static_cast<std::size_t>(hi)];
      } else if (hi >= static_cast<std::ptrdiff_t>(grid.size())) {
        c.values[g] = c.values[static_cast<std::size_t>(lo)];
        c.slope_values[g] = c.slope_values[static_cast<std::size_t>(lo)];
      } else {
        const double a = (grid[g] - grid[static_cast<std::size_t>(lo)]) /
                         (grid[static_cast<std::size_t>(hi)] - grid[static_cast<std::size_t>(lo)]);
        c.values[g] = (1 - a) * c.values[static_cast<std::size_t>(lo)] + a * c.values[static_cast<std::size_t>(hi)];
        c.slope_values[g] =
            (1 - a) * c.slope_values[static_cast<std::size_t>(lo)] + a * c.slope_values[static_cast<std::size_t>(hi)];
      }
    }
  }
  out.fitted.resize(ds.N());
  out.residuals.resize(ds.N());
  for (std::size_t r = 0; r < ds.N(); ++r) {
    const double t = ds.t(r);
    double f = out.vc_tilde[0].clamped(t);
    for (std::size_t l = 0; l < q; ++l) f += ds.z(r, l) * out.vc_tilde[l + 1].clamped(t);
    for (std::size_t k = 0; k < p; ++k) f += ds.x(r, k) * out.vc_tilde[q + 1 + k].clamped(t);
    out.fitted[r] = f;
    out.residuals[r] = ds.y(r) - f;
  }
  return out;
}

double pair_weight(double t_a, std::span<const double> x_a, double t_b, std::span<const double> x_b, double h_c,
                   double h_a) {
  if (!(h_c > 0.0) || !(h_a > 0.0)) throw Error(ErrorKind::Argument, "bandwidths must be positive");
  double w = kernel_eval((t_a - t_b) / h_c);
  for (std::size_t k = 0; k < x_a.size() && w > 0.0; ++k) w *= kernel_eval((x_a[k] - x_b[k]) / h_a);
  return w;
}

PairWeights pair_weights(const LongitudinalDataset& ds, double h_c, double h_a) {
  if (!(h_c > 0.0) || !(h_a > 0.0)) throw Error(ErrorKind::Argument, "bandwidths must be positive");
  PairWeights pw;
  pw.h_c = h_c;
  pw.h_a = h_a;
  pw.p = ds.p();
  std::vector<std::size_t> order(ds.N());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return ds.t(a) < ds.t(b); });
  std::vector<double> xa(ds.p()), xb(ds.p());
  for (std::size_t u = 0; u < order.size(); ++u) {
    const std::size_t a = order[u];
    for (std::size_t k = 0; k < ds.p(); ++k) xa[k] = ds.x(a, k);
    for (std::size_t v = u + 1; v < order.size() && ds.t(order[v]) - ds.t(a) < h_c; ++v) {
      const std::size_t b = order[v];
      if (ds.subject_of(a) == ds.subject_of(b)) continue;
      for (std::size_t k = 0; k < ds.p(); ++k) xb[k] = ds.x(b, k);
      const double w = pair_weight(ds.t(a), xa, ds.t(b), xb, h_c, h_a);
      if (w <= 0.0) continue;
      pw.a.push_back(static_cast<std::uint32_t>(a));
      pw.b.push_back(static_cast<std::uint32_t>(b));
      pw.w.push_back(w);
    }
  }
  return pw;
}

QuadStat stat_quadratic(const PairWeights& pw, std::span<const double> e, const SampleSummary& s) {
  if (s.n < 2) throw Error(ErrorKind::InvalidData, "the test statistic needs at least two subjects");
  if (pw.w.empty())
    throw Error(ErrorKind::Degenerate, "the variance estimate of the test statistic is zero; all pair weights "
                                       "vanish, use larger bandwidths");
  double sum = 0.0, var = 0.0;
  for (std::size_t u = 0; u < pw.w.size(); ++u) {
    const double ea = e[pw.a[u]], eb = e[pw.b[u]], w = pw.w[u];
    sum += w * ea * eb;
    var += w * w * ea * ea * eb * eb;
  }
  sum *= 2.0;  // ordered pairs (i, j) and (j, i)
  var *= 2.0;
  const double n = static_cast<double>(s.n), N = static_cast<double>(s.N);
  const double H = pw.h_c * std::pow(pw.h_a, static_cast<double>(pw.p));
  QuadStat out;
  out.stat = sum / (n * n * s.nbar_h * s.nbar_h * H);
  const double sigma2 = var / (n * n * s.nbar_h * H);
  out.sigma1 = std::sqrt(sigma2);
  if (sum == 0.0) return out;
  if (!(out.sigma1 > 0.0))
    throw Error(ErrorKind::Degenerate, "the variance estimate of the test statistic is zero; all pair weights "
                                       "vanish, use larger bandwidths");
  const double norm = N * N - n * s.nbar_2;
  out.z = n * n * s.nbar_h * s.nbar_h / std::sqrt(norm) * std::sqrt(H) * out.stat / out.sigma1;
  return out;
}

QuadStat stat_quadratic(const LongitudinalDataset& ds, std::span<const double> residuals, double h_c, double h_a) {
  if (residuals.size() != ds.N()) throw Error(ErrorKind::Argument, "one residual per observation");
  return stat_quadratic(pair_weights(ds, h_c, h_a), residuals, summarize(ds));
}

std::pair<double, double> test_bandwidths(const LongitudinalDataset& ds, double h_c, double h_a) {
  const double f = std::pow(static_cast<double>(ds.N()), -1.0 / 20.0);
  return {h_c * f, h_a * f};
}

namespace {

struct NullOutcome {
  std::vector<double> fitted;
  std::vector<double> residuals;
};

NullOutcome fit_null(const LongitudinalDataset& ds, TestKind which, const TestConfig& cfg,
                     const std::vector<Curve1D>& betas) {
  if (which == TestKind::TimeVarying) {
    auto f = fit_null_constant(ds, betas);
    return {std::move(f.fitted), std::move(f.residuals)};
  }
  auto f = fit_null_vcm(ds, cfg.h_c, cfg.grid_size);
  return {std::move(f.fitted), std::move(f.residuals)};
}

}  // namespace

TestResult bootstrap_test(const LongitudinalDataset& ds, TestKind which, const TestConfig& cfg,
                          const std::vector<Curve1D>& betas, const BetaProvider& provider) {
  if (cfg.B < 99) throw Error(ErrorKind::Argument, "the bootstrap needs B >= 99 replicates");
  if (!(cfg.h_c > 0.0) || !(cfg.h_a > 0.0)) throw Error(ErrorKind::Argument, "test bandwidths must be positive");
  const SampleSummary s = summarize(ds);
  const PairWeights pw = pair_weights(ds, cfg.h_c, cfg.h_a);
  const NullOutcome null = fit_null(ds, which, cfg, betas);
  const QuadStat observed = stat_quadratic(pw, null.residuals, s);

  TestResult res;
  res.which = which;
  res.stat = observed.stat;
  res.z = observed.z;
  res.sigma1 = observed.sigma1;
  res.p_asymptotic = 1.0 - normal_cdf(observed.z);
  res.h_c = cfg.h_c;
  res.h_a = cfg.h_a;
  res.B = cfg.B;
  res.seed = cfg.seed;

  std::vector<double> z_star(cfg.B, std::numeric_limits<double>::quiet_NaN());
  parallel_for(cfg.B, cfg.threads, [&](std::size_t b) {
    Rng rng = make_stream(cfg.seed, b);
    std::bernoulli_distribution coin(0.5);
    std::vector<double> y(ds.N());
    for (std::size_t i = 0; i < ds.n(); ++i) {
      const double xi = coin(rng) ? 1.0 : -1.0;
      for (std::size_t r = ds.offset(i); r < ds.offset(i) + ds.m(i); ++r)
        y[r] = null.fitted[r] + xi * null.residuals[r];
    }
    try {
      const auto star = ds.with_responses(y);
      const bool refit_betas = provider && which == TestKind::TimeVarying;
      const auto refit = fit_null(star, which, cfg, refit_betas ? provider(star) : betas);
      z_star[b] = stat_quadratic(pw, refit.residuals, s).z;
    } catch (const Error&) {
    }
  });
  std::size_t exceed = 0;
  for (double z : z_star) {
    if (!std::isfinite(z)) {
      ++res.dropped;
      continue;
    }
    res.boot_stats.push_back(z);
    if (z >= observed.z) ++exceed;
  }
  if (static_cast<double>(res.dropped) > 0.1 * static_cast<double>(cfg.B))
    throw Error(ErrorKind::Degenerate, std::to_string(res.dropped) + " of " + std::to_string(cfg.B) +
                                           " bootstrap replicates failed");
  res.p_bootstrap = (1.0 + static_cast<double>(exceed)) / (static_cast<double>(res.boot_stats.size()) + 1.0);
  return res;
}

}  // namespace svcam
