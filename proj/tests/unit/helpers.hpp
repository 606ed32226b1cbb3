#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "svcam/dataset.hpp"

namespace testing_support {

/// Weighted least squares via column-pivoting QR on sqrt(w) X; minimum-norm
/// through complete orthogonal decomposition when rank deficient.
inline Eigen::VectorXd wls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  const Eigen::VectorXd sw = w.cwiseSqrt();
  const Eigen::MatrixXd A = sw.asDiagonal() * X;
  const Eigen::VectorXd b = sw.cwiseProduct(y);
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
  return cod.solve(b);
}

struct RandomDesign {
  std::size_t n = 3;
  std::vector<std::size_t> m;  // empty: uniform 2..4
  std::size_t q = 1;
  std::size_t p = 1;
};

/// Random ragged dataset with y produced by `mean` plus optional noise.
inline svcam::LongitudinalDataset random_dataset(
    std::mt19937_64& rng, const RandomDesign& d,
    const std::function<double(double, const Eigen::VectorXd&, const Eigen::VectorXd&)>& mean, double noise) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> count(2, 4);
  std::vector<svcam::SubjectRecord> recs;
  for (std::size_t i = 0; i < d.n; ++i) {
    const std::size_t m = d.m.empty() ? static_cast<std::size_t>(count(rng)) : d.m[i];
    svcam::SubjectRecord r;
    r.id = "s" + std::to_string(i);
    r.z.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d.q));
    r.x.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d.p));
    for (std::size_t j = 0; j < m; ++j) {
      const double t = unit(rng);
      Eigen::VectorXd z(static_cast<Eigen::Index>(d.q)), x(static_cast<Eigen::Index>(d.p));
      for (std::size_t l = 0; l < d.q; ++l) z[static_cast<Eigen::Index>(l)] = unit(rng) < 0.5 ? 0.0 : 1.0;
      for (std::size_t k = 0; k < d.p; ++k) x[static_cast<Eigen::Index>(k)] = -1.0 + 2.0 * unit(rng);
      r.times.push_back(t);
      r.responses.push_back(mean(t, z, x) + noise * normal(rng));
      r.z.row(static_cast<Eigen::Index>(j)) = z.transpose();
      r.x.row(static_cast<Eigen::Index>(j)) = x.transpose();
    }
    recs.push_back(std::move(r));
  }
  return svcam::LongitudinalDataset(std::move(recs), d.p, d.q);
}

inline double max_abs_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace testing_support
