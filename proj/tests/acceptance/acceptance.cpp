#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../unit/helpers.hpp"
#include "svcam/error.hpp"
#include "svcam/hypotest.hpp"
#include "svcam/inference.hpp"
#include "svcam/peblle.hpp"
#include "svcam/simlab.hpp"
#include "svcam/smoothing.hpp"
#include "svcam/splines.hpp"

using namespace svcam;
using testing_support::max_abs_diff;
using testing_support::random_dataset;
using testing_support::wls;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> details;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    details.push_back(std::string(ok ? "ok   " : "MISS ") + what);
  }
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
  char buf[200];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

using Mean = std::function<double(double, const Eigen::VectorXd&, const Eigen::VectorXd&)>;

// 1 ---------------------------------------------------------------------------

Outcome kernel_constants_criterion() {
  Outcome o;
  const auto c = kernel_constants();
  o.check(std::abs(c.kappa - 0.6) < 1e-12, fmt("kappa = %.15g", c.kappa));
  o.check(std::abs(c.kappa2 - 0.2) < 1e-12, fmt("kappa2 = %.15g", c.kappa2));
  o.check(std::abs(c.kappa22 - 3.0 / 35.0) < 1e-12, fmt("kappa22 = %.15g", c.kappa22));
  o.check(std::abs(c.kappa4 - 3.0 / 35.0) < 1e-12, fmt("kappa4 = %.15g", c.kappa4));
  return o;
}

// 2 ---------------------------------------------------------------------------

Eigen::VectorXd vc_oracle(const LongitudinalDataset& ds, const std::vector<Curve1D>& betas, double h, double t) {
  const std::size_t d = ds.q() + 1 + ds.p();
  const auto N = static_cast<Eigen::Index>(ds.N());
  Eigen::MatrixXd X(N, static_cast<Eigen::Index>(2 * d));
  Eigen::VectorXd y(N), w(N);
  for (std::size_t r = 0; r < ds.N(); ++r) {
    Eigen::VectorXd F(static_cast<Eigen::Index>(d));
    F.head(static_cast<Eigen::Index>(ds.q() + 1)) = ds.z_aug(r);
    for (std::size_t k = 0; k < ds.p(); ++k) F[static_cast<Eigen::Index>(ds.q() + 1 + k)] = betas[k](ds.x(r, k));
    const auto ri = static_cast<Eigen::Index>(r);
    X.row(ri) << F.transpose(), (ds.t(r) - t) * F.transpose();
    y[ri] = ds.y(r);
    w[ri] = ds.w(r) * kernel_eval((ds.t(r) - t) / h) / h;
  }
  return wls(X, y, w).head(static_cast<Eigen::Index>(d));
}

Eigen::Vector2d additive_oracle(const LongitudinalDataset& ds, const std::vector<Curve1D>& vc,
                                const std::vector<Curve1D>& betas, double h, std::size_t k, double x) {
  const std::size_t q = ds.q();
  const auto N = static_cast<Eigen::Index>(ds.N());
  Eigen::MatrixXd X(N, 2);
  Eigen::VectorXd y(N), w(N);
  for (std::size_t r = 0; r < ds.N(); ++r) {
    const double t = ds.t(r);
    double partial = ds.y(r) - vc[0](t);
    for (std::size_t l = 0; l < q; ++l) partial -= ds.z(r, l) * vc[l + 1](t);
    for (std::size_t j = 0; j < ds.p(); ++j)
      if (j != k) partial -= vc[q + 1 + j](t) * betas[j](ds.x(r, j));
    const auto ri = static_cast<Eigen::Index>(r);
    const double a = vc[q + 1 + k](t);
    X.row(ri) << a, a * (ds.x(r, k) - x);
    y[ri] = partial;
    w[ri] = ds.w(r) * kernel_eval((ds.x(r, k) - x) / h) / h;
  }
  return wls(X, y, w);
}

Eigen::MatrixXd pilot_design(const LongitudinalDataset& ds, const PilotFit& f) {
  const auto jc = static_cast<Eigen::Index>(f.basis_c.dimension());
  Eigen::Index cols = static_cast<Eigen::Index>(ds.q() + 1) * jc;
  for (const auto& b : f.basis_a) cols += jc * b.dimension();
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ds.N()), cols);
  for (std::size_t r = 0; r < ds.N(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    const Eigen::VectorXd bt = f.basis_c.evaluate(ds.t(r));
    const Eigen::VectorXd za = ds.z_aug(r);
    Eigen::Index col = 0;
    for (Eigen::Index l = 0; l < za.size(); ++l)
      for (Eigen::Index c = 0; c < jc; ++c) X(ri, col++) = za[l] * bt[c];
    for (std::size_t k = 0; k < ds.p(); ++k) {
      const Eigen::VectorXd bx = f.basis_a[k].evaluate(ds.x(r, k));
      for (Eigen::Index a = 0; a < bx.size(); ++a)
        for (Eigen::Index c = 0; c < jc; ++c) X(ri, col++) = bx[a] * bt[c];
    }
  }
  return X;
}

Outcome oracle_criterion() {
  Outcome o;
  std::mt19937_64 rng(20240601);
  const std::vector<Curve1D> betas{[](double x) { return std::sin(2 * x); }, [](double x) { return x * x - 0.3; }};
  const std::vector<Curve1D> vc{[](double t) { return 1 + t; }, [](double t) { return std::cos(t); },
                                [](double t) { return 0.5 + t * t; }, [](double t) { return 2 - t; }};
  const Mean mean = [](double t, const Eigen::VectorXd&, const Eigen::VectorXd& x) { return t + x[0]; };
  const int instances = 25;

  double worst = 0.0;
  int count = 0;
  for (int i = 0; i < instances; ++i) {
    const std::size_t q = i % 2, p = 1 + i % 2;
    const auto ds = random_dataset(rng, {4, {3, 3, 3, 3}, q, p}, mean, 1.0);
    const std::vector<Curve1D> used(betas.begin(), betas.begin() + static_cast<long>(p));
    const double t = 0.2 + 0.15 * (i % 5);
    worst = std::max(worst, max_abs_diff(vc_step(ds, used, 2.0, t), vc_oracle(ds, used, 2.0, t)));
    ++count;
  }
  o.check(worst < 1e-9, fmt("vc_step: %g instances, max deviation %.3g", count, worst));

  worst = 0.0;
  count = 0;
  for (int i = 0; i < instances; ++i) {
    const auto ds = random_dataset(rng, {3, {}, 1, 2}, mean, 1.0);
    const std::size_t k = i % 2;
    const double x = -0.5 + 0.25 * (i % 5);
    const auto mine = additive_step(ds, vc, {betas[0], betas[1]}, 3.0, k, x);
    const Eigen::Vector2d ref = additive_oracle(ds, vc, betas, 3.0, k, x);
    worst = std::max({worst, std::abs(mine.first - ref[0]), std::abs(mine.second - ref[1])});
    ++count;
  }
  o.check(worst < 1e-9, fmt("additive_step: %g instances, max deviation %.3g", count, worst));

  worst = 0.0;
  count = 0;
  for (int i = 0; i < instances; ++i) {
    const auto ds = random_dataset(rng, {4, {3, 3, 3, 3}, 1, 1}, mean, 1.0);
    Eigen::MatrixXd S(static_cast<Eigen::Index>(ds.N()), 3);
    Eigen::VectorXd y(static_cast<Eigen::Index>(ds.N()));
    for (std::size_t r = 0; r < ds.N(); ++r) {
      S.row(static_cast<Eigen::Index>(r)) << 1.0, ds.z(r, 0), betas[1](ds.x(r, 0));
      y[static_cast<Eigen::Index>(r)] = ds.y(r);
    }
    if (Eigen::FullPivLU<Eigen::MatrixXd>(S).rank() < 3) continue;
    const auto f = fit_null_constant(ds, {betas[1]});
    worst = std::max(worst, max_abs_diff(f.a_tilde, wls(S, y, Eigen::VectorXd::Ones(y.size()))));
    ++count;
  }
  o.check(count >= 20 && worst < 1e-9, fmt("fit_null_constant: %g instances, max deviation %.3g", count, worst));

  worst = 0.0;
  count = 0;
  for (int i = 0; i < instances; ++i) {
    const auto ds = random_dataset(rng, {4, {3, 3, 3, 3}, 1, 1}, mean, 1.0);
    const double h = 2.0;
    const auto f = fit_null_vcm(ds, h, 5);
    for (std::size_t g = 0; g < 5; ++g) {
      const double t0 = f.vc_tilde[0].grid[g];
      const auto N = static_cast<Eigen::Index>(ds.N());
      Eigen::MatrixXd X(N, 6);
      Eigen::VectorXd y(N), w(N);
      for (std::size_t r = 0; r < ds.N(); ++r) {
        const double d = ds.t(r) - t0;
        const auto ri = static_cast<Eigen::Index>(r);
        X.row(ri) << 1.0, ds.z(r, 0), ds.x(r, 0), d, d * ds.z(r, 0), d * ds.x(r, 0);
        y[ri] = ds.y(r);
        w[ri] = ds.w(r) * kernel_eval(d / h) / h;
      }
      const Eigen::VectorXd ref = wls(X, y, w);
      for (std::size_t c = 0; c < 3; ++c)
        worst = std::max(worst, std::abs(f.vc_tilde[c].values[g] - ref[static_cast<Eigen::Index>(c)]));
    }
    ++count;
  }
  o.check(worst < 1e-9, fmt("fit_null_vcm: %g instances, max deviation %.3g", count, worst));

  worst = 0.0;
  count = 0;
  for (int i = 0; i < instances; ++i) {
    const auto ds = random_dataset(rng, {4, {3, 3, 3, 3}, static_cast<std::size_t>(i % 2), 1}, mean, 0.5);
    const auto f = fit_pilot(ds, 0, 0, 2);
    const Eigen::MatrixXd X = pilot_design(ds, f);
    const Eigen::Map<const Eigen::VectorXd> y(ds.responses().data(), static_cast<Eigen::Index>(ds.N()));
    const Eigen::Map<const Eigen::VectorXd> w(ds.weights().data(), static_cast<Eigen::Index>(ds.N()));
    const Eigen::VectorXd ref = X * wls(X, y, w);
    Eigen::VectorXd mine(static_cast<Eigen::Index>(ds.N()));
    for (std::size_t r = 0; r < ds.N(); ++r)
      mine[static_cast<Eigen::Index>(r)] = f.fitted(ds.t(r), ds.z_aug(r), ds.x_row(r));
    worst = std::max(worst, max_abs_diff(mine, ref));
    ++count;
  }
  o.check(worst < 1e-9, fmt("fit_pilot fitted values: %g instances, max deviation %.3g", count, worst));
  return o;
}

// 3 ---------------------------------------------------------------------------

Outcome table1_criterion() {
  Outcome o;
  StudyConfig cfg;
  cfg.cells = {{50, 5}, {100, 10}};
  cfg.Q = 100;
  cfg.seed = 1;
  const auto t0 = std::chrono::steady_clock::now();
  const auto rep = table1_study(cfg);
  const std::vector<std::string> comps{"alpha00", "alpha01", "alpha1", "beta1"};
  const double paper[2][4] = {{0.0880, 0.1794, 0.0048, 0.1529}, {0.0311, 0.0655, 0.0023, 0.0657}};
  for (const auto& [k, v] : rep.notes) o.details.push_back("     " + k + " = " + v);
  for (std::size_t c = 0; c < comps.size(); ++c) {
    double mine[2];
    for (int cell = 0; cell < 2; ++cell) {
      const auto& row = rep.find({std::to_string(cfg.cells[cell].n), std::to_string(cfg.cells[cell].m), comps[c]});
      mine[cell] = row.value;
      const double ratio = row.value / paper[cell][c];
      o.check(ratio >= 0.5 && ratio <= 2.0,
              comps[c] + " (" + std::to_string(cfg.cells[cell].n) + "," + std::to_string(cfg.cells[cell].m) + ")" +
                  fmt(": MPISE %.4f (mcse %.4f) vs paper %.4f", row.value, row.mcse, paper[cell][c]));
    }
    o.check(mine[1] < mine[0], comps[c] + fmt(": (100,10) %.4f < (50,5) %.4f", mine[1], mine[0]));
  }
  o.details.push_back(fmt("     failed replications %g, %.0f s", static_cast<double>(rep.failed), seconds_since(t0)));
  return o;
}

// 4 ---------------------------------------------------------------------------

Outcome coverage_criterion() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  StudyConfig cfg;
  cfg.cells = {{50, 10}};
  cfg.Q = 200;
  cfg.seed = 2;
  const auto rep = coverage_study(cfg, {0.9, 0.95}, {IntervalMethod::Unified});
  for (const auto& [k, v] : rep.notes) o.details.push_back("     " + k + " = " + v);
  const std::vector<std::string> comps{"alpha00", "alpha01", "alpha1", "beta1"};
  const double paper90[4] = {88.40, 86.63, 88.00, 88.25};
  const double paper95[4] = {93.50, 93.50, 93.15, 93.63};
  for (std::size_t c = 0; c < comps.size(); ++c) {
    for (const auto& [level, ref] : {std::pair{"0.9", paper90[c]}, std::pair{"0.95", paper95[c]}}) {
      const auto& row = rep.find({"50", "10", comps[c], "unified", level, "aecp"});
      const auto& len = rep.find({"50", "10", comps[c], "unified", level, "ael"});
      o.check(std::abs(row.value - ref) <= 4.0, comps[c] + " unified " + level +
                                                    fmt(": AECP %.2f (mcse %.2f) vs paper %.2f", row.value,
                                                        row.mcse, ref) +
                                                    fmt(", AEL %.4f", len.value));
    }
  }

  StudyConfig dense;
  dense.cells = {{50, 200}};
  dense.Q = 50;
  dense.seed = 3;
  dense.cv_points = 5;
  const auto sp = coverage_study(dense, {0.9, 0.95}, {IntervalMethod::Sparse, IntervalMethod::Unified});
  for (const auto& [k, v] : sp.notes) o.details.push_back("     " + k + " = " + v);
  for (const auto& comp : comps) {
    for (const char* level : {"0.9", "0.95"}) {
      const auto& s = sp.find({"50", "200", comp, "sparse", level, "aecp"});
      const auto& u = sp.find({"50", "200", comp, "unified", level, "aecp"});
      o.check(s.value < 50.0, comp + " sparse " + level + fmt(" at (50,200): AECP %.2f (unified %.2f)", s.value,
                                                               u.value));
    }
  }
  o.details.push_back(fmt("     %.0f s", seconds_since(t0)));
  return o;
}

// 5 ---------------------------------------------------------------------------

Outcome power_criterion() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  StudyConfig cfg;
  cfg.cells = {{50, 10}};
  cfg.Q = 200;
  cfg.seed = 4;
  const auto d1 = power_study(cfg, DgpKind::Dgp1, {0.0, 0.8}, {0.05}, 200);
  for (const auto& [k, v] : d1.notes) o.details.push_back("     dgp1 " + k + " = " + v);
  const auto& s1 = d1.find({"dgp1", "50", "10", "0", "0.05"});
  const auto& p1 = d1.find({"dgp1", "50", "10", "0.8", "0.05"});
  o.check(s1.value >= 0.02 && s1.value <= 0.10, fmt("DGP I size at 5%%: %.3f (mcse %.3f), paper 0.055", s1.value, s1.mcse));
  o.check(p1.value >= 0.95, fmt("DGP I power at theta 0.8: %.3f (mcse %.3f), paper 1.000", p1.value, p1.mcse));

  const auto d2 = power_study(cfg, DgpKind::Dgp2, {0.0, 0.6}, {0.05}, 200);
  for (const auto& [k, v] : d2.notes) o.details.push_back("     dgp2 " + k + " = " + v);
  const auto& s2 = d2.find({"dgp2", "50", "10", "0", "0.05"});
  const auto& p2 = d2.find({"dgp2", "50", "10", "0.6", "0.05"});
  o.check(s2.value >= 0.02 && s2.value <= 0.11, fmt("DGP II size at 5%%: %.3f (mcse %.3f), paper 0.057", s2.value, s2.mcse));
  o.check(p2.value >= 0.90, fmt("DGP II power at theta 0.6: %.3f (mcse %.3f), paper 0.983", p2.value, p2.mcse));
  o.details.push_back(fmt("     %.0f s", seconds_since(t0)));
  return o;
}

// 6 ---------------------------------------------------------------------------

Outcome property_criterion() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  {
    std::vector<double> v(200);
    for (auto& x : v) x = u(rng);
    double worst = 0.0;
    for (int k : {0, 1, 3, 5}) {
      const auto b = make_basis(v, k, 4);
      for (int i = 0; i <= 200; ++i) worst = std::max(worst, std::abs(b.evaluate(b.lo() + (b.hi() - b.lo()) * i / 200.0).sum() - 1.0));
    }
    o.check(worst < 1e-12, fmt("partition of unity, max deviation %.3g", worst));
  }
  {
    double worst = 0.0;
    for (int inst = 0; inst < 50; ++inst) {
      const int rows = 12;
      Eigen::MatrixXd design(rows, 2);
      std::vector<double> y(rows), d(rows), w(rows);
      const double a = 4 * u(rng) - 2, b = 4 * u(rng) - 2;
      for (int r = 0; r < rows; ++r) {
        d[r] = u(rng) - 0.5;
        design.row(r) << 1.0, d[r];
        y[r] = a + b * d[r];
        w[r] = 0.1 + u(rng);
      }
      const auto res = local_linear_fit(design, y, d, 0.8, w);
      worst = std::max({worst, std::abs(res.coefficients[0] - a), std::abs(res.coefficients[1] - b)});
    }
    o.check(worst < 1e-10, fmt("local linear reproduces linear truths, max deviation %.3g", worst));
  }
  const auto sim = generate({DgpKind::Example1, 50, 10, 0.0, 607});
  FitConfig fc;
  fc.h_c = 0.16;
  fc.h_a = 0.4;
  fc.knots = std::pair{1, 1};
  const auto f = fit(sim.data, fc);
  {
    const auto [am, bm] = identification_means(f, sim.data);
    o.check(std::abs(am[0] - 1.0) < 1e-8 && std::abs(bm[0]) < 1e-8,
            fmt("identification: mean alpha1 %.12f, mean beta1 %.3g", am[0], bm[0]));
  }
  {
    std::vector<double> e(sim.data.responses().begin(), sim.data.responses().end());
    double m = 0.0;
    for (double v : e) m += v / static_cast<double>(e.size());
    for (auto& v : e) v -= m;
    auto scaled = e;
    for (auto& v : scaled) v *= -3.25;
    const auto a = stat_quadratic(sim.data, e, 0.15, 0.5);
    const auto b = stat_quadratic(sim.data, scaled, 0.15, 0.5);
    o.check(std::abs(a.z - b.z) <= 1e-12 * std::max(1.0, std::abs(a.z)), fmt("z under residual scaling: %.15g vs %.15g", a.z, b.z));
  }
  {
    SubjectRecord s1, s2;
    s1.id = "a";
    s1.times = {0.50, 0.52};
    s1.responses = {0, 0};
    s1.z.resize(2, 0);
    s1.x = Eigen::MatrixXd::Zero(2, 1);
    s2.id = "b";
    s2.times = {0.51};
    s2.responses = {0};
    s2.z.resize(1, 0);
    s2.x = Eigen::MatrixXd::Constant(1, 1, 0.05);
    const LongitudinalDataset ds({s1, s2}, 1, 0);
    const std::vector<double> e{2.0, 3.0, -1.0};
    const double nh = summarize(ds).nbar_h, H = 0.2 * 0.4;
    const double w = kernel_eval(0.01 / 0.2) * kernel_eval(0.05 / 0.4);
    const double between = 2 * (w * 2.0 * -1.0 + w * 3.0 * -1.0) / (4 * nh * nh * H);
    const double within = 2 * kernel_eval(0.02 / 0.2) * kernel_eval(0.0) * 2.0 * 3.0 / (4 * nh * nh * H);
    const auto q = stat_quadratic(ds, e, 0.2, 0.4);
    o.check(std::abs(q.stat - between) < 1e-12 && std::abs(within) > 1.0,
            fmt("i=j exclusion: statistic %.6f, between-subject oracle %.6f, within-subject term %.6f", q.stat,
                between, within));
  }
  {
    const auto ne = estimate_nuisance(sim.data, f);
    const auto s = summarize(sim.data);
    double worst = 0.0;
    for (double t : ne.grid)
      worst = std::min(worst, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gamma_C(t, ne, s, f.h_c)).eigenvalues().minCoeff());
    o.check(worst >= -1e-10, fmt("Gamma_C PSD on the grid, smallest eigenvalue %.3g", worst));
  }
  {
    StudyConfig cfg;
    cfg.cells = {{40, 6}};
    cfg.Q = 6;
    cfg.bandwidths = std::pair{0.2, 0.5};
    cfg.knots = std::pair{1, 1};
    const auto a = table1_study(cfg);
    cfg.threads = 4;
    const auto b = table1_study(cfg);
    TestConfig tc;
    tc.h_c = 0.2;
    tc.h_a = 1.0;
    tc.B = 99;
    const auto d2 = generate({DgpKind::Dgp2, 40, 6, 0.0, 608});
    const auto r1 = bootstrap_test(d2.data, TestKind::Linearity, tc);
    tc.threads = 4;
    const auto r4 = bootstrap_test(d2.data, TestKind::Linearity, tc);
    o.check(a.to_csv() == b.to_csv() && r1.boot_stats == r4.boot_stats, "results identical for 1 and 4 threads");
  }
  const double elapsed = seconds_since(t0);
  o.check(elapsed < 60.0, fmt("property suite ran in %.2f s", elapsed));
  return o;
}

// 7 ---------------------------------------------------------------------------

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome rate_criterion() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();

  StudyConfig cfg;
  cfg.seed = 7;
  cfg.cv_points = 5;
  cfg.pilot_reps = 2;
  const Cell cells[2] = {{50, 5}, {100, 30}};
  std::vector<std::vector<double>> med(2);
  for (std::size_t ci = 0; ci < 2; ++ci) {
    const auto [hc, ha] = pilot_bandwidths(DgpKind::Example1, 0.0, cells[ci], ci, cfg);
    std::vector<std::vector<double>> ise(4);
    for (std::size_t r = 0; r < 20; ++r) {
      const auto sim = generate({DgpKind::Example1, cells[ci].n, cells[ci].m, 0.0, replication_seed(cfg.seed, ci, r)});
      FitConfig fc;
      fc.h_c = hc;
      fc.h_a = ha;
      fc.knots = std::pair{1, 1};
      const auto f = fit(sim.data, fc);
      const auto e = component_ise(f, reidentify(sim.truth, sim.data), sim.data);
      for (std::size_t c = 0; c < 4; ++c) ise[c].push_back(e[c]);
    }
    for (std::size_t c = 0; c < 4; ++c) med[ci].push_back(median(ise[c]));
    o.details.push_back(fmt("     (%g,%g) bandwidths h_c %.4f", static_cast<double>(cells[ci].n),
                            static_cast<double>(cells[ci].m), hc) +
                        fmt(", h_a %.4f", ha));
  }
  const std::vector<std::string> comps{"alpha00", "alpha01", "alpha1", "beta1"};
  for (std::size_t c = 0; c < 4; ++c)
    o.check(med[1][c] < med[0][c], comps[c] + fmt(" median ISE: (100,30) %.4f < (50,5) %.4f", med[1][c], med[0][c]));

  // z under the time-invariance null
  const Cell cell{50, 10};
  const auto [hc, ha] = pilot_bandwidths(DgpKind::Dgp1, 0.0, cell, 9, cfg);
  std::vector<double> z;
  for (std::size_t r = 0; r < 500; ++r) {
    try {
      const auto sim = generate({DgpKind::Dgp1, cell.n, cell.m, 0.0, replication_seed(cfg.seed, 9, r)});
      FitConfig fc;
      fc.h_c = hc;
      fc.h_a = ha;
      fc.knots = std::pair{1, 1};
      const auto f = fit(sim.data, fc);
      std::vector<Curve1D> betas;
      for (const auto& c : f.additive_curves) betas.push_back([c](double x) { return c.clamped(x); });
      const auto null = fit_null_constant(sim.data, betas);
      const auto [th, ta] = test_bandwidths(sim.data, hc, ha);
      z.push_back(stat_quadratic(sim.data, null.residuals, th, ta).z);
    } catch (const Error&) {
    }
  }
  double mean = 0.0, var = 0.0;
  for (double v : z) mean += v / static_cast<double>(z.size());
  for (double v : z) var += (v - mean) * (v - mean) / static_cast<double>(z.size() - 1);
  o.check(z.size() >= 475, fmt("z replications usable: %g of 500", static_cast<double>(z.size())));
  o.check(mean >= -0.3 && mean <= 0.3, fmt("z mean under the null %.4f, required [-0.3, 0.3]", mean));
  o.check(var >= 0.6 && var <= 1.6, fmt("z variance under the null %.4f, required [0.6, 1.6]", var));
  o.details.push_back(fmt("     %.0f s", seconds_since(t0)));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"kernel constants", kernel_constants_criterion},
      {"oracle equivalence", oracle_criterion},
      {"Table 1 MPISE reproduction", table1_criterion},
      {"coverage reproduction", coverage_criterion},
      {"size and power reproduction", power_criterion},
      {"property suites", property_criterion},
      {"error decrease and z normality", rate_criterion},
  };
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.check(false, std::string("error: ") + e.what());
    }
    for (const auto& d : o.details) std::printf("  [%d] %s\n", id, d.c_str());
    std::printf("criterion %d %s: %s\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str());
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
