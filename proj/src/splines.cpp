#include "svcam/splines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "svcam/error.hpp"

namespace svcam {

SplineBasis::SplineBasis(int order, std::vector<double> interior_knots, double lo, double hi)
    : order_(order), interior_(std::move(interior_knots)), lo_(lo), hi_(hi) {
  if (order < 1) throw Error(ErrorKind::Argument, "spline order must be at least 1");
  if (!(hi > lo)) throw Error(ErrorKind::KnotPlacement, "spline boundary must satisfy lo < hi");
  double prev = lo;
  for (double k : interior_) {
    if (!(k > prev) || !(k < hi))
      throw Error(ErrorKind::KnotPlacement, "interior knots must be strictly increasing inside (lo, hi)");
    prev = k;
  }
  knots_.assign(static_cast<std::size_t>(order), lo);
  knots_.insert(knots_.end(), interior_.begin(), interior_.end());
  knots_.insert(knots_.end(), static_cast<std::size_t>(order), hi);
}

double SplineBasis::clamp(double x) const {
  constexpr double slack = 1e-12;
  if (x < lo_) {
    if (lo_ - x > slack) throw Error(ErrorKind::Domain, "spline argument " + std::to_string(x) + " below basis range");
    return lo_;
  }
  if (x > hi_) {
    if (x - hi_ > slack) throw Error(ErrorKind::Domain, "spline argument " + std::to_string(x) + " above basis range");
    return hi_;
  }
  return x;
}

int SplineBasis::span_index(double x) const {
  const int n = dimension() - 1;
  if (x >= hi_) return n;
  // Last knot index s with knots_[s] <= x, restricted to [order-1, n].
  auto it = std::upper_bound(knots_.begin() + order_ - 1, knots_.begin() + n + 1, x);
  return static_cast<int>(it - knots_.begin()) - 1;
}

Eigen::MatrixXd SplineBasis::local_derivatives(double x, int n, int& span) const {
  const int p = order_ - 1;
  span = span_index(x);
  const auto& U = knots_;
  Eigen::MatrixXd ndu(p + 1, p + 1);
  std::vector<double> left(p + 1), right(p + 1);
  ndu(0, 0) = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - U[span + 1 - j];
    right[j] = U[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu(j, r) = right[r + 1] + left[j - r];
      const double temp = ndu(r, j - 1) / ndu(j, r);
      ndu(r, j) = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu(j, j) = saved;
  }
  Eigen::MatrixXd ders = Eigen::MatrixXd::Zero(n + 1, p + 1);
  for (int j = 0; j <= p; ++j) ders(0, j) = ndu(j, p);
  const int nd = std::min(n, p);
  Eigen::MatrixXd a(2, p + 1);
  for (int r = 0; r <= p; ++r) {
    int s1 = 0, s2 = 1;
    a.setZero();
    a(0, 0) = 1.0;
    for (int k = 1; k <= nd; ++k) {
      double d = 0.0;
      const int rk = r - k, pk = p - k;
      if (r >= k) {
        a(s2, 0) = a(s1, 0) / ndu(pk + 1, rk);
        d = a(s2, 0) * ndu(rk, pk);
      }
      const int j1 = rk >= -1 ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a(s2, j) = (a(s1, j) - a(s1, j - 1)) / ndu(pk + 1, rk + j);
        d += a(s2, j) * ndu(rk + j, pk);
      }
      if (r <= pk) {
        a(s2, k) = -a(s1, k - 1) / ndu(pk + 1, r);
        d += a(s2, k) * ndu(r, pk);
      }
      ders(k, r) = d;
      std::swap(s1, s2);
    }
  }
  double factor = p;
  for (int k = 1; k <= nd; ++k) {
    ders.row(k) *= factor;
    factor *= (p - k);
  }
  return ders;
}

Eigen::VectorXd SplineBasis::evaluate(double x) const { return derivative(x, 0); }

Eigen::VectorXd SplineBasis::derivative(double x, int derivative) const {
  if (derivative < 0) throw Error(ErrorKind::Argument, "negative derivative order");
  const double xc = clamp(x);
  int span = 0;
  const Eigen::MatrixXd ders = local_derivatives(xc, derivative, span);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dimension());
  const int p = order_ - 1;
  for (int j = 0; j <= p; ++j) out[span - p + j] = ders(derivative, j);
  return out;
}

namespace {

double quantile_sorted(const std::vector<double>& s, double prob) {
  const double pos = prob * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, s.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return s[lo] + frac * (s[hi] - s[lo]);
}

SplineBasis quantile_basis(std::span<const double> values, int K, int order, double lo, double hi) {
  if (K < 0) throw Error(ErrorKind::Argument, "interior knot count must be nonnegative");
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  const auto distinct = static_cast<std::size_t>(std::unique(s.begin(), s.end()) - s.begin());
  if (distinct < static_cast<std::size_t>(K) + 2)
    throw Error(ErrorKind::KnotPlacement, "need at least " + std::to_string(K + 2) +
                                              " distinct values to place " + std::to_string(K) +
                                              " interior knots, have " + std::to_string(distinct));
  s.assign(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  std::vector<double> knots;
  for (int j = 1; j <= K; ++j) knots.push_back(quantile_sorted(s, static_cast<double>(j) / (K + 1)));
  return SplineBasis(order, std::move(knots), lo, hi);
}

}  // namespace

SplineBasis make_basis(std::span<const double> values, int interior_knots, int order) {
  if (values.empty()) throw Error(ErrorKind::EmptyData, "make_basis needs values");
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return quantile_basis(values, interior_knots, order, *lo, *hi);
}

Eigen::VectorXd tensor_basis(const Eigen::VectorXd& b_t, const Eigen::VectorXd& b_x) {
  Eigen::VectorXd out(b_t.size() * b_x.size());
  for (Eigen::Index a = 0; a < b_x.size(); ++a) out.segment(a * b_t.size(), b_t.size()) = b_x[a] * b_t;
  return out;
}

int PilotFit::parameter_count() const {
  const int jc = basis_c.dimension();
  int total = static_cast<int>(q + 1) * jc;
  for (const auto& b : basis_a) total += jc * b.dimension();
  return total;
}

double PilotFit::surface(std::size_t k, double t, double x) const {
  return gamma_k[k].dot(tensor_basis(basis_c.evaluate(t), basis_a[k].evaluate(x)));
}

double PilotFit::fitted(double t, const Eigen::VectorXd& z_aug, const Eigen::VectorXd& x) const {
  const Eigen::VectorXd bc = basis_c.evaluate(t);
  const Eigen::Index jc = bc.size();
  double v = 0.0;
  for (std::size_t l = 0; l <= q; ++l) v += z_aug[l] * gamma0.segment(l * jc, jc).dot(bc);
  for (std::size_t k = 0; k < p; ++k) v += gamma_k[k].dot(tensor_basis(bc, basis_a[k].evaluate(x[k])));
  return v;
}

PilotFit fit_pilot(const LongitudinalDataset& ds, int interior_knots_c, int interior_knots_a, int order) {
  PilotFit fit;
  fit.q = ds.q();
  fit.p = ds.p();
  fit.basis_c = quantile_basis(ds.times(), interior_knots_c, order, ds.time_support().lo,
                               ds.time_support().hi);
  for (std::size_t k = 0; k < ds.p(); ++k) {
    const auto col = ds.x_column(k);
    fit.basis_a.push_back(quantile_basis(col, interior_knots_a, order, ds.covariate_support(k).lo,
                                         ds.covariate_support(k).hi));
  }
  const int jc = fit.basis_c.dimension();
  const int cols = fit.parameter_count();
  const auto N = static_cast<Eigen::Index>(ds.N());

  Eigen::MatrixXd design(N, cols);
  Eigen::VectorXd rhs(N);
  for (Eigen::Index r = 0; r < N; ++r) {
    const std::size_t obs = static_cast<std::size_t>(r);
    const double sw = std::sqrt(ds.w(obs));
    const Eigen::VectorXd bc = fit.basis_c.evaluate(ds.t(obs));
    const Eigen::VectorXd z = ds.z_aug(obs);
    Eigen::Index c = 0;
    for (Eigen::Index l = 0; l < z.size(); ++l, c += jc) design.row(r).segment(c, jc) = sw * z[l] * bc.transpose();
    for (std::size_t k = 0; k < ds.p(); ++k) {
      const Eigen::VectorXd tb = tensor_basis(bc, fit.basis_a[k].evaluate(ds.x(obs, k)));
      design.row(r).segment(c, tb.size()) = sw * tb.transpose();
      c += tb.size();
    }
    rhs[r] = sw * ds.y(obs);
  }

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
  cod.setThreshold(1e-10);
  cod.compute(design);
  fit.null_dimension = cols - static_cast<int>(cod.rank());
  const int structural = static_cast<int>(ds.p()) * jc;
  if (fit.null_dimension > structural) {
    std::ostringstream msg;
    msg << "pilot design is rank deficient: null-space dimension " << fit.null_dimension
        << " exceeds the structural " << structural << " (" << cols << " columns, N = " << N << ")";
    throw Error(ErrorKind::PilotSingular, msg.str());
  }
  const Eigen::VectorXd coef = cod.solve(rhs);
  fit.rss = (rhs - design * coef).squaredNorm();

  const Eigen::Index zlen = static_cast<Eigen::Index>(ds.q() + 1) * jc;
  fit.gamma0 = coef.head(zlen);
  Eigen::Index c = zlen;
  for (std::size_t k = 0; k < ds.p(); ++k) {
    const Eigen::Index len = static_cast<Eigen::Index>(jc) * fit.basis_a[k].dimension();
    fit.gamma_k.push_back(coef.segment(c, len));
    c += len;
  }
  return fit;
}

namespace {

Eigen::VectorXd mean_time_basis(const PilotFit& fit, const LongitudinalDataset& ds) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(fit.basis_c.dimension());
  for (double t : ds.times()) acc += fit.basis_c.evaluate(t);
  return acc / static_cast<double>(ds.N());
}

// Coefficients on basis_a of x -> mean_t g_k(t, x), uncentered.
Eigen::VectorXd averaged_surface(const PilotFit& fit, std::size_t k, const Eigen::VectorXd& bc_mean) {
  const Eigen::Index jc = bc_mean.size();
  const Eigen::Index ja = fit.basis_a[k].dimension();
  Eigen::VectorXd c(ja);
  for (Eigen::Index a = 0; a < ja; ++a) c[a] = fit.gamma_k[k].segment(a * jc, jc).dot(bc_mean);
  return c;
}

}  // namespace

double PilotAdditive::operator()(double x) const {
  return basis.evaluate(x).dot(coefficients) - centering_constant;
}

double PilotAdditive::second_derivative(double x) const {
  return basis.derivative(x, 2).dot(coefficients);
}

PilotAdditive pilot_beta(const PilotFit& fit, const LongitudinalDataset& ds, std::size_t k,
                         std::span<const double> grid) {
  if (k >= fit.p) throw Error(ErrorKind::Argument, "additive component index out of range");
  PilotAdditive out;
  out.k = k;
  out.basis = fit.basis_a[k];
  out.coefficients = averaged_surface(fit, k, mean_time_basis(fit, ds));
  double acc = 0.0;
  for (std::size_t r = 0; r < ds.N(); ++r) acc += out.basis.evaluate(ds.x(r, k)).dot(out.coefficients);
  out.centering_constant = acc / static_cast<double>(ds.N());
  out.grid.assign(grid.begin(), grid.end());
  out.values.reserve(grid.size());
  for (double x : grid) out.values.push_back(out(x));
  return out;
}

double PilotCoefficients::value(std::size_t component, double t) const {
  return basis.evaluate(t).dot(coefficients[component]);
}

double PilotCoefficients::second_derivative(std::size_t component, double t) const {
  return basis.derivative(t, 2).dot(coefficients[component]);
}

PilotCoefficients pilot_coefficients(const PilotFit& fit, const LongitudinalDataset& ds) {
  PilotCoefficients out;
  out.basis = fit.basis_c;
  const Eigen::Index jc = fit.basis_c.dimension();
  const Eigen::VectorXd bc_mean = mean_time_basis(fit, ds);
  const double inv_n = 1.0 / static_cast<double>(ds.N());

  for (std::size_t l = 0; l <= fit.q; ++l) out.coefficients.push_back(fit.gamma0.segment(l * jc, jc));

  for (std::size_t k = 0; k < fit.p; ++k) {
    const SplineBasis& ba = fit.basis_a[k];
    const Eigen::VectorXd beta_coef = averaged_surface(fit, k, bc_mean);
    Eigen::VectorXd mean_b = Eigen::VectorXd::Zero(ba.dimension());
    Eigen::VectorXd mean_b_beta = Eigen::VectorXd::Zero(ba.dimension());
    double center = 0.0;
    std::vector<Eigen::VectorXd> bx(ds.N());
    for (std::size_t r = 0; r < ds.N(); ++r) {
      bx[r] = ba.evaluate(ds.x(r, k));
      mean_b += bx[r];
      center += bx[r].dot(beta_coef);
    }
    mean_b *= inv_n;
    center *= inv_n;
    for (std::size_t r = 0; r < ds.N(); ++r) mean_b_beta += bx[r] * (bx[r].dot(beta_coef) - center);
    mean_b_beta *= inv_n;

    Eigen::VectorXd trend_part(jc), alpha(jc);
    for (Eigen::Index c = 0; c < jc; ++c) {
      trend_part[c] = 0.0;
      alpha[c] = 0.0;
      for (Eigen::Index a = 0; a < ba.dimension(); ++a) {
        trend_part[c] += fit.gamma_k[k][a * jc + c] * mean_b[a];
        alpha[c] += fit.gamma_k[k][a * jc + c] * mean_b_beta[a];
      }
    }
    out.coefficients[0] += trend_part;
    const double scale = alpha.dot(bc_mean);
    if (std::abs(scale) > 1e-12) {
      alpha /= scale;
    } else {
      alpha.setOnes();  // flat additive part: the time profile is not identified
    }
    out.coefficients.push_back(alpha);
  }
  return out;
}

KnotSelection select_knots_bic(const LongitudinalDataset& ds, std::span<const int> grid_c,
                               std::span<const int> grid_a, int order) {
  if (grid_c.empty() || grid_a.empty()) throw Error(ErrorKind::Argument, "knot grids must be nonempty");
  const double n = static_cast<double>(ds.n());
  double y2 = 0.0;
  for (std::size_t r = 0; r < ds.N(); ++r) y2 += ds.w(r) * ds.y(r) * ds.y(r);
  // RSS floor keeps exactly-interpolating candidates tied so the penalty decides.
  const double rss_floor = 1e-20 * std::max(y2 / n, 1e-300);

  KnotSelection sel;
  bool found = false;
  int best_params = 0;
  for (int kc : grid_c) {
    for (int ka : grid_a) {
      KnotSelection::Candidate cand{kc, ka, 0, std::numeric_limits<double>::quiet_NaN()};
      try {
        const PilotFit fit = fit_pilot(ds, kc, ka, order);
        cand.parameters = fit.parameter_count();
        const double rss = std::max(fit.rss / n, rss_floor);
        cand.bic = std::log(rss) + cand.parameters * std::log(n) / n;
      } catch (const Error&) {
      }
      sel.table.push_back(cand);
      if (std::isnan(cand.bic)) continue;
      if (!found || cand.bic < sel.bic || (cand.bic == sel.bic && cand.parameters < best_params)) {
        found = true;
        sel.k_c = kc;
        sel.k_a = ka;
        sel.bic = cand.bic;
        best_params = cand.parameters;
      }
    }
  }
  if (!found) throw Error(ErrorKind::Selection, "every knot candidate failed to fit");
  return sel;
}

}  // namespace svcam
