#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "helpers.hpp"
#include "svcam/error.hpp"
#include "svcam/smoothing.hpp"

using namespace svcam;

namespace {

template <typename F>
double simpson(F f, double a, double b, int n = 20000) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

}  // namespace

TEST_CASE("Epanechnikov kernel values") {
  CHECK(kernel_eval(0.0) == 0.75);
  CHECK(kernel_eval(1.0) == 0.0);
  CHECK(kernel_eval(-1.0) == 0.0);
  CHECK(kernel_eval(-0.5) == 0.5625);
  CHECK(kernel_eval(1.5) == 0.0);
  CHECK(kernel_eval(0.3) == kernel_eval(-0.3));
}

TEST_CASE("kernel integrates to one") {
  CHECK(std::abs(simpson(kernel_eval, -1.0, 1.0) - 1.0) < 1e-10);
}

TEST_CASE("kernel constants match their symbolic values") {
  const auto c = kernel_constants();
  CHECK(std::abs(c.kappa - 3.0 / 5.0) < 1e-12);
  CHECK(std::abs(c.kappa2 - 1.0 / 5.0) < 1e-12);
  CHECK(std::abs(c.kappa22 - 3.0 / 35.0) < 1e-12);
  CHECK(std::abs(c.kappa4 - 3.0 / 35.0) < 1e-12);
  // cross-check against quadrature
  CHECK(std::abs(c.kappa - simpson([](double u) { return kernel_eval(u) * kernel_eval(u); }, -1, 1)) < 1e-10);
  CHECK(std::abs(c.kappa4 - simpson([](double u) { return u * u * u * u * kernel_eval(u); }, -1, 1)) < 1e-10);
}

TEST_CASE("local linear fit reproduces linear data exactly") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0), pw(0.1, 3.0);
  const int rows = 15;
  Eigen::MatrixXd design(rows, 2);
  std::vector<double> y(rows), d(rows), w(rows);
  for (int r = 0; r < rows; ++r) {
    d[r] = 0.4 * u(rng);
    design(r, 0) = 1.0;
    design(r, 1) = d[r];
    y[r] = 2.5 - 1.75 * d[r];
    w[r] = pw(rng);
  }
  const auto res = local_linear_fit(design, y, d, 0.5, w);
  CHECK(std::abs(res.coefficients[0] - 2.5) < 1e-10);
  CHECK(std::abs(res.coefficients[1] + 1.75) < 1e-10);
  CHECK((res.gram - res.gram.transpose()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("empty window is a singular fit carrying the target") {
  Eigen::MatrixXd design(3, 2);
  design << 1, 2, 1, 3, 1, -4;
  std::vector<double> y{1, 2, 3}, d{2, 3, -4}, w{1, 1, 1};
  try {
    local_linear_fit(design, y, d, 1.0, w, 0.25);
    FAIL("expected a singular fit");
  } catch (const SingularFitError& e) {
    CHECK(e.target() == 0.25);
  }
}

TEST_CASE("intercept-only fit at zero distance is the weighted mean") {
  Eigen::MatrixXd design = Eigen::MatrixXd::Ones(4, 1);
  std::vector<double> y{1, 2, 4, 8}, d{0, 0, 0, 0}, w{1, 2, 3, 4};
  const auto res = local_linear_fit(design, y, d, 0.3, w);
  const double oracle = (1 * 1 + 2 * 2 + 3 * 4 + 4 * 8) / 10.0;
  CHECK(std::abs(res.coefficients[0] - oracle) < 1e-12);
}

TEST_CASE("local linear fit equals a dense normal-equation oracle") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0), pw(0.1, 2.0);
  for (int inst = 0; inst < 25; ++inst) {
    const int rows = 6 + inst % 5;
    Eigen::MatrixXd design(rows, 4);
    Eigen::VectorXd yv(rows), wv(rows);
    std::vector<double> y(rows), d(rows), w(rows);
    const double h = 0.8;
    for (int r = 0; r < rows; ++r) {
      d[r] = 0.7 * u(rng);
      const double a = u(rng);
      design.row(r) << 1.0, a, d[r], a * d[r];
      y[r] = yv[r] = u(rng);
      w[r] = pw(rng);
      wv[r] = w[r] * kernel_eval(d[r] / h) / h;
    }
    const auto res = local_linear_fit(design, y, d, h, w);
    const Eigen::VectorXd oracle = testing_support::wls(design, yv, wv);
    CHECK(testing_support::max_abs_diff(res.coefficients, oracle) < 1e-9);
    CHECK(res.effective_n == doctest::Approx(wv.sum()).epsilon(1e-12));
  }
}

TEST_CASE("local linear fit is invariant to a common weight scale") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd design(8, 2);
  std::vector<double> y(8), d(8), w(8), w2(8);
  for (int r = 0; r < 8; ++r) {
    d[r] = 0.5 * u(rng);
    design.row(r) << 1.0, d[r];
    y[r] = u(rng);
    w[r] = 1.0 + u(rng) * 0.5;
    w2[r] = 37.0 * w[r];
  }
  const auto a = local_linear_fit(design, y, d, 0.6, w);
  const auto b = local_linear_fit(design, y, d, 0.6, w2);
  CHECK(testing_support::max_abs_diff(a.coefficients, b.coefficients) < 1e-12);
}

TEST_CASE("kde examples") {
  std::vector<double> one{0.3};
  CHECK(kde(one, 1.0, 0.3) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(kde(one, 0.1, 2.0) == 0.0);
  std::vector<double> two{-0.5, 0.5};
  CHECK(kde(two, 1.0, 0.0) == doctest::Approx(0.5625).epsilon(1e-15));
}

TEST_CASE("kde is nonnegative and integrates to one") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nrm(0.0, 1.0);
  std::vector<double> pts(200);
  for (auto& v : pts) v = nrm(rng);
  const double h = 0.4;
  const double lo = *std::min_element(pts.begin(), pts.end()) - h;
  const double hi = *std::max_element(pts.begin(), pts.end()) + h;
  bool nonneg = true;
  for (int i = 0; i <= 400; ++i) nonneg = nonneg && kde(pts, h, lo + (hi - lo) * i / 400.0) >= 0.0;
  CHECK(nonneg);
  CHECK(std::abs(simpson([&](double x) { return kde(pts, h, x); }, lo, hi, 40000) - 1.0) < 1e-6);
}
