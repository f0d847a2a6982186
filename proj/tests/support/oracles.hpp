#pragma once

// Test-only reference implementations, deliberately independent of the
// library solvers they are used to check.

#include <cmath>

#include <Eigen/Dense>

namespace test_oracles {

// Plain full-matrix IRLS for the unpenalized logistic MLE. A is the design
// including any intercept column.
inline Eigen::VectorXd irls_logistic(const Eigen::MatrixXd& a, const Eigen::VectorXd& z,
                                     int iters = 200, double tol = 1e-12) {
  const auto n = a.rows();
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(a.cols());
  for (int it = 0; it < iters; ++it) {
    Eigen::VectorXd eta = a * theta;
    Eigen::VectorXd p(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p[i] = 1.0 / (1.0 + std::exp(-eta[i]));
      w[i] = p[i] * (1.0 - p[i]);
    }
    const Eigen::VectorXd g = a.transpose() * (z - p);
    const Eigen::MatrixXd h = a.transpose() * w.asDiagonal() * a;
    const Eigen::VectorXd step = h.ldlt().solve(g);
    theta += step;
    if (step.lpNorm<Eigen::Infinity>() < tol) break;
  }
  return theta;
}

}  // namespace test_oracles
