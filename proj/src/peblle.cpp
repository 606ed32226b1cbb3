#include "svcam/peblle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "svcam/error.hpp"
#include "svcam/parallel.hpp"
#include "svcam/smoothing.hpp"

namespace svcam {

namespace {

std::size_t locate(const std::vector<double>& grid, double x) {
  auto it = std::upper_bound(grid.begin(), grid.end(), x);
  std::size_t hi = static_cast<std::size_t>(it - grid.begin());
  hi = std::clamp<std::size_t>(hi, 1, grid.size() - 1);
  return hi - 1;
}

double interpolate(const std::vector<double>& grid, const std::vector<double>& v, double x) {
  if (grid.size() == 1) return v[0];
  const std::size_t lo = locate(grid, x);
  const double w = (x - grid[lo]) / (grid[lo + 1] - grid[lo]);
  return (1.0 - w) * v[lo] + w * v[lo + 1];
}

}  // namespace

double ComponentCurve::operator()(double x) const {
  constexpr double slack = 1e-12;
  if (x < grid.front() - slack || x > grid.back() + slack)
    throw Error(ErrorKind::Extrapolation, "evaluation point " + std::to_string(x) + " outside the curve grid [" +
                                              std::to_string(grid.front()) + ", " + std::to_string(grid.back()) + "]");
  return interpolate(grid, values, std::clamp(x, grid.front(), grid.back()));
}

double ComponentCurve::clamped(double x) const {
  return interpolate(grid, values, std::clamp(x, grid.front(), grid.back()));
}

double ComponentCurve::slope(double x) const {
  return interpolate(grid, slope_values, std::clamp(x, grid.front(), grid.back()));
}

std::vector<double> linspace(double lo, double hi, std::size_t count) {
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  for (std::size_t g = 0; g < count; ++g)
    out[g] = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(count - 1);
  out.back() = hi;
  return out;
}

std::vector<double> default_bandwidth_grid(const Interval& support, double lo_frac, double hi_frac,
                                           std::size_t count) {
  return linspace(support.width() * lo_frac, support.width() * hi_frac, count);
}

namespace {

/// Observations sorted by a smoothing coordinate, for window scans.
class WindowIndex {
 public:
  explicit WindowIndex(std::span<const double> pos) : pos_(pos.begin(), pos.end()), order_(pos.size()) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::sort(order_.begin(), order_.end(), [&](auto a, auto b) { return pos_[a] < pos_[b]; });
    sorted_.resize(order_.size());
    for (std::size_t r = 0; r < order_.size(); ++r) sorted_[r] = pos_[order_[r]];
  }

  template <typename Fn>
  void for_window(double center, double h, Fn&& fn) const {
    auto it = std::lower_bound(sorted_.begin(), sorted_.end(), center - h);
    for (auto r = static_cast<std::size_t>(it - sorted_.begin()); r < sorted_.size() && sorted_[r] <= center + h; ++r)
      fn(order_[r], sorted_[r] - center);
  }

 private:
  std::vector<double> pos_;
  std::vector<std::size_t> order_;
  std::vector<double> sorted_;
};

// Local linear fit at `target` with regressors F (rows) and slope columns
// F * (pos - target); kernel k_h(pos - target) times the row weight.
LocalFitResult local_fit_at(const WindowIndex& index, const Eigen::MatrixXd& F, std::span<const double> y,
                            std::span<const double> w, double h, double target) {
  const Eigen::Index d = F.cols();
  NormalEquations ne(2 * d);
  Eigen::VectorXd row(2 * d);
  index.for_window(target, h, [&](std::size_t r, double dist) {
    const double kw = kernel_h(dist, h);
    if (kw <= 0.0) return;
    const auto ri = static_cast<Eigen::Index>(r);
    row.head(d) = F.row(ri).transpose();
    row.tail(d) = dist * F.row(ri).transpose();
    ne.add(row, y[r], w[r] * kw);
  });
  return ne.solve(target);
}

struct GridFit {
  Eigen::MatrixXd level;  // d x G
  Eigen::MatrixXd slope;  // d x G
  std::size_t filled = 0;
};

GridFit local_linear_on_grid(const Eigen::MatrixXd& F, std::span<const double> y, std::span<const double> pos,
                             std::span<const double> w, double h, const std::vector<double>& grid) {
  if (!(h > 0.0)) throw Error(ErrorKind::Argument, "bandwidth must be positive");
  const WindowIndex index(pos);
  const Eigen::Index d = F.cols();
  const auto G = static_cast<Eigen::Index>(grid.size());
  GridFit out{Eigen::MatrixXd::Zero(d, G), Eigen::MatrixXd::Zero(d, G), 0};
  std::vector<bool> ok(grid.size(), false);
  std::size_t failed = 0;
  double first_failure = 0.0;
  for (Eigen::Index g = 0; g < G; ++g) {
    try {
      const auto res = local_fit_at(index, F, y, w, h, grid[g]);
      out.level.col(g) = res.coefficients.head(d);
      out.slope.col(g) = res.coefficients.tail(d);
      ok[g] = true;
    } catch (const SingularFitError& e) {
      if (failed++ == 0) first_failure = e.target();
    }
  }
  if (failed > 0) {
    if (static_cast<double>(failed) > 0.05 * static_cast<double>(grid.size()))
      throw SingularFitError(first_failure, std::to_string(failed) + " of " + std::to_string(grid.size()) +
                                                " grid targets have singular local fits (first at " +
                                                std::to_string(first_failure) + "); widen the bandwidth");
    // Fill from the nearest solvable neighbours.
    for (Eigen::Index g = 0; g < G; ++g) {
      if (ok[g]) continue;
      Eigen::Index lo = g - 1, hi = g + 1;
      while (lo >= 0 && !ok[lo]) --lo;
      while (hi < G && !ok[hi]) ++hi;
      if (lo < 0) {
        out.level.col(g) = out.level.col(hi);
        out.slope.col(g) = out.slope.col(hi);
      } else if (hi >= G) {
        out.level.col(g) = out.level.col(lo);
        out.slope.col(g) = out.slope.col(lo);
      } else {
        const double a = (grid[g] - grid[lo]) / (grid[hi] - grid[lo]);
        out.level.col(g) = (1 - a) * out.level.col(lo) + a * out.level.col(hi);
        out.slope.col(g) = (1 - a) * out.slope.col(lo) + a * out.slope.col(hi);
      }
    }
    out.filled = failed;
  }
  return out;
}

Eigen::MatrixXd vc_regressors(const LongitudinalDataset& ds, const std::vector<std::vector<double>>& beta_at_obs) {
  const std::size_t d = ds.q() + 1 + ds.p();
  Eigen::MatrixXd F(static_cast<Eigen::Index>(ds.N()), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < ds.N(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    F(ri, 0) = 1.0;
    for (std::size_t l = 0; l < ds.q(); ++l) F(ri, l + 1) = ds.z(r, l);
    for (std::size_t k = 0; k < ds.p(); ++k) F(ri, ds.q() + 1 + k) = beta_at_obs[k][r];
  }
  return F;
}

std::vector<ComponentCurve> to_curves(const GridFit& gf, const std::vector<double>& grid, double h) {
  std::vector<ComponentCurve> out;
  for (Eigen::Index c = 0; c < gf.level.rows(); ++c) {
    ComponentCurve curve;
    curve.grid = grid;
    curve.bandwidth = h;
    curve.values.resize(grid.size());
    curve.slope_values.resize(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
      curve.values[g] = gf.level(c, static_cast<Eigen::Index>(g));
      curve.slope_values[g] = gf.slope(c, static_cast<Eigen::Index>(g));
    }
    out.push_back(std::move(curve));
  }
  return out;
}

std::vector<double> eval_at(const ComponentCurve& curve, std::span<const double> pts) {
  std::vector<double> out(pts.size());
  for (std::size_t r = 0; r < pts.size(); ++r) out[r] = curve.clamped(pts[r]);
  return out;
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

void scale_curve(ComponentCurve& c, double factor) {
  for (auto& v : c.values) v *= factor;
  for (auto& v : c.slope_values) v *= factor;
}

}  // namespace

Eigen::VectorXd vc_step(const LongitudinalDataset& ds, const std::vector<Curve1D>& betas, double h_c, double t) {
  if (betas.size() != ds.p()) throw Error(ErrorKind::Argument, "vc_step needs one beta per continuous covariate");
  if (!(h_c > 0.0)) throw Error(ErrorKind::Argument, "bandwidth must be positive");
  std::vector<std::vector<double>> beta_at(ds.p(), std::vector<double>(ds.N()));
  for (std::size_t k = 0; k < ds.p(); ++k)
    for (std::size_t r = 0; r < ds.N(); ++r) beta_at[k][r] = betas[k](ds.x(r, k));
  const Eigen::MatrixXd F = vc_regressors(ds, beta_at);
  const WindowIndex index(ds.times());
  return local_fit_at(index, F, ds.responses(), ds.weights(), h_c, t).coefficients.head(F.cols());
}

std::pair<double, double> additive_step(const LongitudinalDataset& ds, const std::vector<Curve1D>& vc,
                                        const std::vector<Curve1D>& betas_other, double h_a, std::size_t k,
                                        double x) {
  const std::size_t d = ds.q() + 1 + ds.p();
  if (vc.size() != d) throw Error(ErrorKind::Argument, "additive_step needs q+1+p coefficient functions");
  if (betas_other.size() != ds.p() || k >= ds.p()) throw Error(ErrorKind::Argument, "additive_step: bad component index");
  if (!(h_a > 0.0)) throw Error(ErrorKind::Argument, "bandwidth must be positive");
  Eigen::MatrixXd F(static_cast<Eigen::Index>(ds.N()), 1);
  std::vector<double> partial(ds.N());
  for (std::size_t r = 0; r < ds.N(); ++r) {
    const double t = ds.t(r);
    double v = ds.y(r) - vc[0](t);
    for (std::size_t l = 0; l < ds.q(); ++l) v -= ds.z(r, l) * vc[l + 1](t);
    for (std::size_t j = 0; j < ds.p(); ++j)
      if (j != k) v -= vc[ds.q() + 1 + j](t) * betas_other[j](ds.x(r, j));
    partial[r] = v;
    F(static_cast<Eigen::Index>(r), 0) = vc[ds.q() + 1 + k](t);
  }
  const auto xs = ds.x_column(k);
  const WindowIndex index(xs);
  const auto res = local_fit_at(index, F, partial, ds.weights(), h_a, x);
  return {res.coefficients[0], res.coefficients[1]};
}

SemiVcamFit fit_with_pilot(const LongitudinalDataset& ds, PilotFit pilot, double h_c, double h_a,
                           const std::vector<double>& time_grid, const std::vector<std::vector<double>>& x_grids,
                           bool refit) {
  const std::size_t p = ds.p(), q = ds.q(), N = ds.N();
  if (!(h_c > 0.0) || !(h_a > 0.0)) throw Error(ErrorKind::Argument, "bandwidths must be positive");
  if (x_grids.size() != p) throw Error(ErrorKind::Argument, "one covariate grid per continuous covariate");

  SemiVcamFit out;
  out.q = q;
  out.p = p;
  out.h_c = h_c;
  out.h_a = h_a;
  auto& rep = out.normalization;
  rep.singleton_subjects = ds.singleton_count();
  rep.boundary_margin_c = h_c;
  rep.boundary_margin_a.assign(p, h_a);

  // (1) pilot additive components, exact at the observed covariates.
  std::vector<PilotAdditive> pilots;
  std::vector<std::vector<double>> pilot_at(p, std::vector<double>(N));
  for (std::size_t k = 0; k < p; ++k) {
    pilots.push_back(pilot_beta(pilot, ds, k, {}));
    for (std::size_t r = 0; r < N; ++r) pilot_at[k][r] = pilots[k](ds.x(r, k));
  }

  // (2) VC step with the pilot betas.
  const GridFit vc = local_linear_on_grid(vc_regressors(ds, pilot_at), ds.responses(), ds.times(), ds.weights(),
                                          h_c, time_grid);
  rep.filled_targets += vc.filled;
  rep.total_targets += time_grid.size();
  out.vc_curves = to_curves(vc, time_grid, h_c);

  std::vector<std::vector<double>> alpha_at(q + 1 + p);
  for (std::size_t c = 0; c < q + 1 + p; ++c) alpha_at[c] = eval_at(out.vc_curves[c], ds.times());

  // (3) additive step per component, other components at their pilots.
  for (std::size_t k = 0; k < p; ++k) {
    Eigen::MatrixXd F(static_cast<Eigen::Index>(N), 1);
    std::vector<double> partial(N);
    for (std::size_t r = 0; r < N; ++r) {
      double v = ds.y(r) - alpha_at[0][r];
      for (std::size_t l = 0; l < q; ++l) v -= ds.z(r, l) * alpha_at[l + 1][r];
      for (std::size_t j = 0; j < p; ++j)
        if (j != k) v -= alpha_at[q + 1 + j][r] * pilot_at[j][r];
      partial[r] = v;
      F(static_cast<Eigen::Index>(r), 0) = alpha_at[q + 1 + k][r];
    }
    const auto xs = ds.x_column(k);
    const GridFit add = local_linear_on_grid(F, partial, xs, ds.weights(), h_a, x_grids[k]);
    rep.filled_targets += add.filled;
    rep.total_targets += x_grids[k].size();
    out.additive_curves.push_back(to_curves(add, x_grids[k], h_a)[0]);
  }

  // (4) identification: center beta_k (absorbing c_k alpha_k into the
  // trend), scale alpha_k to empirical mean 1, optionally refit the VC step.
  for (std::size_t k = 0; k < p; ++k) {
    auto& beta = out.additive_curves[k];
    auto& alpha = out.vc_curves[q + 1 + k];
    const double center = mean_of(eval_at(beta, ds.x_column(k)));
    for (auto& v : beta.values) v -= center;
    auto& trend = out.vc_curves[0];
    for (std::size_t g = 0; g < trend.values.size(); ++g) {
      trend.values[g] += center * alpha.values[g];
      trend.slope_values[g] += center * alpha.slope_values[g];
    }
    const double scale = mean_of(eval_at(alpha, ds.times()));
    scale_curve(alpha, 1.0 / scale);
    scale_curve(beta, scale);
    rep.beta_center.push_back(center);
    rep.alpha_scale.push_back(scale);
  }

  if (refit && p > 0) {
    rep.refit = true;
    std::vector<std::vector<double>> beta_at(p);
    for (std::size_t k = 0; k < p; ++k) beta_at[k] = eval_at(out.additive_curves[k], ds.x_column(k));
    const GridFit vc2 = local_linear_on_grid(vc_regressors(ds, beta_at), ds.responses(), ds.times(),
                                             ds.weights(), h_c, time_grid);
    rep.filled_targets += vc2.filled;
    rep.total_targets += time_grid.size();
    out.vc_curves = to_curves(vc2, time_grid, h_c);
    for (std::size_t k = 0; k < p; ++k) {
      auto& alpha = out.vc_curves[q + 1 + k];
      const double scale = mean_of(eval_at(alpha, ds.times()));
      scale_curve(alpha, 1.0 / scale);
      scale_curve(out.additive_curves[k], scale);
      rep.refit_scale.push_back(scale);
    }
  }
  out.pilot = std::move(pilot);
  return out;
}

namespace {

std::vector<double> support_grid(const Interval& s, std::size_t count) { return linspace(s.lo, s.hi, count); }

}  // namespace

SemiVcamFit fit(const LongitudinalDataset& ds, const FitConfig& cfg) {
  if (ds.n() < 2) throw Error(ErrorKind::InvalidData, "fit needs at least two subjects");
  if (cfg.grid_size < 2) throw Error(ErrorKind::Argument, "grid size must be at least 2");
  if ((cfg.h_c && !(*cfg.h_c > 0.0)) || (cfg.h_a && !(*cfg.h_a > 0.0)))
    throw Error(ErrorKind::Argument, "explicit bandwidths must be positive");

  std::pair<int, int> knots;
  if (cfg.knots) {
    knots = *cfg.knots;
  } else {
    const auto sel = select_knots_bic(ds, cfg.knot_grid_c, cfg.knot_grid_a, cfg.order);
    knots = {sel.k_c, sel.k_a};
  }

  double h_c = cfg.h_c.value_or(0.0), h_a = cfg.h_a.value_or(0.0);
  if (!cfg.h_c || !cfg.h_a) {
    auto grid_c = cfg.bandwidth_grid_c.empty() ? default_bandwidth_grid(ds.time_support(), 0.06, 0.30, 9)
                                               : cfg.bandwidth_grid_c;
    auto grid_a = cfg.bandwidth_grid_a;
    if (grid_a.empty()) grid_a = default_bandwidth_grid(ds.p() ? ds.covariate_support(0) : Interval{0, 1}, 0.06, 0.30, 9);
    if (cfg.h_c) grid_c = {*cfg.h_c};
    if (cfg.h_a) grid_a = {*cfg.h_a};
    const auto cv = cv_bandwidths(ds, grid_c, grid_a, knots, cfg.order, cfg.grid_size,
                                  cfg.vc_refit_after_additive, cfg.threads);
    h_c = cv.h_c;
    h_a = cv.h_a;
  }

  std::vector<std::vector<double>> x_grids;
  for (std::size_t k = 0; k < ds.p(); ++k) x_grids.push_back(support_grid(ds.covariate_support(k), cfg.grid_size));
  return fit_with_pilot(ds, fit_pilot(ds, knots.first, knots.second, cfg.order), h_c, h_a,
                        support_grid(ds.time_support(), cfg.grid_size), x_grids, cfg.vc_refit_after_additive);
}

CvResult cv_bandwidths(const LongitudinalDataset& ds, const std::vector<double>& grid_c,
                       const std::vector<double>& grid_a, std::pair<int, int> knots, int order,
                       std::size_t grid_size, bool refit, unsigned threads) {
  if (grid_c.empty() || grid_a.empty()) throw Error(ErrorKind::Argument, "bandwidth grids must be nonempty");
  const std::size_t n = ds.n();
  const std::size_t cells = grid_c.size() * grid_a.size();
  const auto time_grid = support_grid(ds.time_support(), grid_size);
  std::vector<std::vector<double>> x_grids;
  for (std::size_t k = 0; k < ds.p(); ++k) x_grids.push_back(support_grid(ds.covariate_support(k), grid_size));

  constexpr double inf = std::numeric_limits<double>::infinity();
  // contribution[i][cell]: held-out error of subject i.
  std::vector<std::vector<double>> contribution(n, std::vector<double>(cells, inf));
  const auto records = ds.records();

  parallel_for(n, threads, [&](std::size_t i) {
    auto recs = records;
    const SubjectRecord held = recs[i];
    recs.erase(recs.begin() + static_cast<std::ptrdiff_t>(i));
    PilotFit pilot;
    LongitudinalDataset train;
    try {
      train = LongitudinalDataset(std::move(recs), ds.p(), ds.q());
      pilot = fit_pilot(train, knots.first, knots.second, order);
    } catch (const Error&) {
      return;
    }
    const double m = static_cast<double>(held.times.size());
    for (std::size_t a = 0; a < grid_c.size(); ++a) {
      for (std::size_t b = 0; b < grid_a.size(); ++b) {
        try {
          const auto f = fit_with_pilot(train, pilot, grid_c[a], grid_a[b], time_grid, x_grids, refit);
          double err = 0.0;
          for (std::size_t j = 0; j < held.times.size(); ++j) {
            Eigen::VectorXd z = held.z.cols() ? Eigen::VectorXd(held.z.row(j).transpose()) : Eigen::VectorXd();
            Eigen::VectorXd x = held.x.cols() ? Eigen::VectorXd(held.x.row(j).transpose()) : Eigen::VectorXd();
            const double r = held.responses[j] - f.predict_clamped(held.times[j], z, x);
            err += r * r;
          }
          contribution[i][a * grid_a.size() + b] = err / m;
        } catch (const Error&) {
        }
      }
    }
  });

  CvResult res;
  res.grid_c = grid_c;
  res.grid_a = grid_a;
  res.scores = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(grid_c.size()),
                                         static_cast<Eigen::Index>(grid_a.size()), inf);
  bool found = false;
  for (std::size_t a = 0; a < grid_c.size(); ++a) {
    for (std::size_t b = 0; b < grid_a.size(); ++b) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) total += contribution[i][a * grid_a.size() + b];
      res.scores(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = total;
      if (!std::isfinite(total)) continue;
      const bool better = !found || total < res.score ||
                          (total == res.score && (grid_c[a] > res.h_c || (grid_c[a] == res.h_c && grid_a[b] > res.h_a)));
      if (better) {
        found = true;
        res.score = total;
        res.h_c = grid_c[a];
        res.h_a = grid_a[b];
      }
    }
  }
  if (!found) throw Error(ErrorKind::Selection, "every bandwidth cell failed during cross-validation");
  return res;
}

namespace {

double predict_impl(const SemiVcamFit& fit, double t, const Eigen::VectorXd& z, const Eigen::VectorXd& x,
                    bool clamp) {
  if (static_cast<std::size_t>(z.size()) != fit.q || static_cast<std::size_t>(x.size()) != fit.p)
    throw Error(ErrorKind::Argument, "predict: covariate lengths do not match the fit");
  auto ev = [clamp](const ComponentCurve& c, double v) { return clamp ? c.clamped(v) : c(v); };
  double out = ev(fit.vc_curves[0], t);
  for (std::size_t l = 0; l < fit.q; ++l) out += z[l] * ev(fit.vc_curves[l + 1], t);
  for (std::size_t k = 0; k < fit.p; ++k) out += ev(fit.vc_curves[fit.q + 1 + k], t) * ev(fit.additive_curves[k], x[k]);
  return out;
}

}  // namespace

double SemiVcamFit::predict(double t, const Eigen::VectorXd& z, const Eigen::VectorXd& x) const {
  return predict_impl(*this, t, z, x, false);
}

double SemiVcamFit::predict_clamped(double t, const Eigen::VectorXd& z, const Eigen::VectorXd& x) const {
  return predict_impl(*this, t, z, x, true);
}

double predict(const SemiVcamFit& fit, double t, const Eigen::VectorXd& z, const Eigen::VectorXd& x) {
  return fit.predict(t, z, x);
}

std::pair<std::vector<double>, std::vector<double>> identification_means(const SemiVcamFit& fit,
                                                                         const LongitudinalDataset& ds) {
  std::vector<double> alpha(fit.p, 0.0), beta(fit.p, 0.0);
  for (std::size_t k = 0; k < fit.p; ++k) {
    for (std::size_t r = 0; r < ds.N(); ++r) {
      alpha[k] += fit.vc_curves[fit.q + 1 + k](ds.t(r));
      beta[k] += fit.additive_curves[k](ds.x(r, k));
    }
    alpha[k] /= static_cast<double>(ds.N());
    beta[k] /= static_cast<double>(ds.N());
  }
  return {alpha, beta};
}

}  // namespace svcam
