#include "svcam/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "svcam/error.hpp"
#include "svcam/parallel.hpp"

namespace svcam {

namespace {
constexpr double pi = std::numbers::pi;
}

const char* to_string(DgpKind kind) {
  switch (kind) {
    case DgpKind::Example1: return "example1";
    case DgpKind::Dgp1: return "dgp1";
    case DgpKind::Dgp2: return "dgp2";
  }
  return "?";
}

DgpKind parse_dgp(const std::string& name) {
  if (name == "example1") return DgpKind::Example1;
  if (name == "dgp1") return DgpKind::Dgp1;
  if (name == "dgp2") return DgpKind::Dgp2;
  throw Error(ErrorKind::Argument, "unknown DGP '" + name + "' (expected example1, dgp1 or dgp2)");
}

double example_beta(double x) { return 4.5 * std::sin(0.4 * pi * x); }

double TruthBundle::mean(double t, double z, double x) const {
  return vc[0](t) + z * vc[1](t) + vc[2](t) * additive[0](x);
}

TruthBundle truth_of(const DgpSpec& spec) {
  TruthBundle tb;
  tb.sigma2 = 1.0;
  const double re = spec.random_effects ? 1.0 : 0.0;
  tb.gamma = [re](double s, double t) { return re * (0.6 + 0.4 * std::cos(2 * pi * (s - t))); };
  const double th = spec.theta;
  switch (spec.kind) {
    case DgpKind::Example1:
      tb.vc = {[](double t) { return 6 * t; }, [](double t) { return 2.5 * std::cos(2 * pi * t); },
               [](double t) { return 6 * t * (1 - t); }};
      tb.additive = {example_beta};
      break;
    case DgpKind::Dgp1: {
      const double s = 1 + th / 6;
      tb.vc = {[th](double t) { return 6 + th * t; },
               [th](double t) { return 2.5 + th * std::cos(2 * pi * t); },
               [th, s](double t) { return (1 + th * t * (1 - t)) / s; }};
      tb.additive = {[s](double x) { return s * example_beta(x); }};
      break;
    }
    case DgpKind::Dgp2:
      tb.vc = {[](double t) { return 6 * t; }, [](double t) { return 2.5 * std::cos(2 * pi * t); },
               [](double t) { return pi / 2 * std::sin(pi * t); }};
      tb.additive = {[th](double x) { return x + 1.5 * th * std::sin(pi * x); }};
      break;
  }
  return tb;
}

Simulated generate(const DgpSpec& spec) {
  if (spec.n < 2 || spec.m < 1) throw Error(ErrorKind::Argument, "simulation needs n >= 2 and m >= 1");
  const double u_half = spec.kind == DgpKind::Dgp2 ? 0.5 : 0.4;
  const double noise_sd = spec.kind == DgpKind::Dgp2 ? 1.0 : 0.2;
  TruthBundle truth = truth_of(spec);
  std::vector<SubjectRecord> recs(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    Rng rng = make_stream(spec.seed, i);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);
    const double u = -u_half + 2 * u_half * unit(rng);
    const double re = spec.random_effects ? 1.0 : 0.0;
    const double eta1 = re * std::sqrt(0.6) * normal(rng);
    const double eta2 = re * std::sqrt(0.2) * normal(rng);
    const double eta3 = re * std::sqrt(0.2) * normal(rng);
    auto& r = recs[i];
    r.id = "s" + std::to_string(i + 1);
    r.z.resize(static_cast<Eigen::Index>(spec.m), 1);
    r.x.resize(static_cast<Eigen::Index>(spec.m), 1);
    for (std::size_t j = 0; j < spec.m; ++j) {
      const double t = unit(rng);
      const double z = coin(rng) ? 1.0 : 0.0;
      const double x = u * (1 + t) + noise_sd * normal(rng);
      const double nu = eta1 + std::sqrt(2.0) * (eta2 * std::sin(2 * pi * t) + eta3 * std::cos(2 * pi * t));
      const double eps = normal(rng);
      r.times.push_back(t);
      r.responses.push_back(truth.mean(t, z, x) + nu + eps);
      r.z(static_cast<Eigen::Index>(j), 0) = z;
      r.x(static_cast<Eigen::Index>(j), 0) = x;
    }
  }
  return {LongitudinalDataset(std::move(recs), 1, 1), std::move(truth)};
}

TruthBundle reidentify(const TruthBundle& truth, const LongitudinalDataset& ds) {
  TruthBundle out = truth;
  const std::size_t q = ds.q();
  for (std::size_t k = 0; k < ds.p(); ++k) {
    const Curve1D alpha = truth.vc[q + 1 + k], beta = truth.additive[k];
    double center = 0.0, scale = 0.0;
    for (std::size_t r = 0; r < ds.N(); ++r) {
      center += beta(ds.x(r, k));
      scale += alpha(ds.t(r));
    }
    center /= static_cast<double>(ds.N());
    scale /= static_cast<double>(ds.N());
    const Curve1D trend = out.vc[0];
    out.vc[0] = [trend, alpha, center](double t) { return trend(t) + center * alpha(t); };
    out.vc[q + 1 + k] = [alpha, scale](double t) { return alpha(t) / scale; };
    out.additive[k] = [beta, center, scale](double x) { return scale * (beta(x) - center); };
  }
  return out;
}

double integrated_squared_error(const Curve1D& estimate, const Curve1D& truth, double lo, double hi,
                                std::size_t count) {
  if (count < 2) throw Error(ErrorKind::Argument, "integration grid needs at least two points");
  const auto grid = linspace(std::min(lo, hi), std::max(lo, hi), count);
  const double step = (grid.back() - grid.front()) / static_cast<double>(count - 1);
  double total = 0.0;
  for (std::size_t g = 0; g < count; ++g) {
    const double d = estimate(grid[g]) - truth(grid[g]);
    total += (g == 0 || g + 1 == count ? 0.5 : 1.0) * d * d;
  }
  return total * step;
}

std::vector<double> component_ise(const SemiVcamFit& fit, const TruthBundle& truth,
                                  const LongitudinalDataset& ds, std::size_t count) {
  std::vector<double> out;
  const auto [tlo, thi] = std::minmax_element(ds.times().begin(), ds.times().end());
  for (std::size_t c = 0; c < fit.vc_curves.size(); ++c) {
    const auto& curve = fit.vc_curves[c];
    out.push_back(integrated_squared_error([&](double t) { return curve.clamped(t); }, truth.vc[c], *tlo, *thi,
                                           count));
  }
  for (std::size_t k = 0; k < fit.p; ++k) {
    const auto xs = ds.x_column(k);
    const auto [xlo, xhi] = std::minmax_element(xs.begin(), xs.end());
    const auto& curve = fit.additive_curves[k];
    out.push_back(integrated_squared_error([&](double x) { return curve.clamped(x); }, truth.additive[k], *xlo,
                                           *xhi, count));
  }
  return out;
}

double ase(const SemiVcamFit& fit, const TruthBundle& truth, const LongitudinalDataset& ds) {
  double total = 0.0;
  for (std::size_t r = 0; r < ds.N(); ++r) {
    const double t = ds.t(r);
    double f = fit.vc_curves[0].clamped(t), g = truth.vc[0](t);
    for (std::size_t l = 0; l < ds.q(); ++l) {
      f += ds.z(r, l) * fit.vc_curves[l + 1].clamped(t);
      g += ds.z(r, l) * truth.vc[l + 1](t);
    }
    for (std::size_t k = 0; k < ds.p(); ++k) {
      f += fit.vc_curves[ds.q() + 1 + k].clamped(t) * fit.additive_curves[k].clamped(ds.x(r, k));
      g += truth.vc[ds.q() + 1 + k](t) * truth.additive[k](ds.x(r, k));
    }
    total += ds.w(r) * (f - g) * (f - g);
  }
  return total;
}

MeanSe mean_and_se(const std::vector<double>& values) {
  if (values.empty()) return {};
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = values.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
  return {mean, sd / std::sqrt(n)};
}

MeanSe proportion(std::size_t hits, std::size_t total) {
  if (total == 0) return {};
  const double p = static_cast<double>(hits) / static_cast<double>(total);
  return {p, std::sqrt(p * (1 - p) / static_cast<double>(total))};
}

std::vector<std::string> component_names(std::size_t q, std::size_t p) {
  std::vector<std::string> out;
  for (std::size_t l = 0; l <= q; ++l) out.push_back("alpha0" + std::to_string(l));
  for (std::size_t k = 1; k <= p; ++k) out.push_back("alpha" + std::to_string(k));
  for (std::size_t k = 1; k <= p; ++k) out.push_back("beta" + std::to_string(k));
  return out;
}

}  // namespace svcam
