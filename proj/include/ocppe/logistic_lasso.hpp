#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ocppe/common.hpp"
#include "ocppe/math.hpp"

namespace ocppe {

inline double sigmoid(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

inline double softplus(double eta) {
  const double a = std::abs(eta);
  return std::max(eta, 0.0) + std::log1p(std::exp(-a));
}

// Binary-regression links. grad_eta is dNLL/deta per observation; curv_bound
// is a global upper bound on the second derivative, which makes the
// coordinate-descent majorization a true majorization (monotone objective).
struct LogitLink {
  static double inv(double eta) { return sigmoid(eta); }
  static double density(double eta) {
    const double p = sigmoid(eta);
    return p * (1.0 - p);
  }
  static double grad_eta(double eta, double z) { return sigmoid(eta) - z; }
  static double loss(double eta, double z) { return softplus(eta) - z * eta; }
  static double irls_weight(double eta) { return density(eta); }
  static constexpr double curv_bound = 0.25;
};

struct ProbitLink {
  static double inv(double eta) { return norm_cdf(eta); }
  static double density(double eta) { return norm_pdf(eta); }
  static double grad_eta(double eta, double z) {
    const double p = norm_cdf(eta);
    const double den = std::max(p * (1.0 - p), 1e-12);
    return norm_pdf(eta) * (p - z) / den;
  }
  static double loss(double eta, double z) {
    const double p = std::min(std::max(norm_cdf(eta), 1e-12), 1.0 - 1e-12);
    return -z * std::log(p) - (1.0 - z) * std::log(1.0 - p);
  }
  static double irls_weight(double eta) {
    const double p = norm_cdf(eta);
    const double den = std::max(p * (1.0 - p), 1e-12);
    const double ph = norm_pdf(eta);
    return ph * ph / den;
  }
  static constexpr double curv_bound = 1.0;
};

struct LogisticLassoOptions {
  double lambda = 0.0;  // total penalty level; objective adds (lambda/n)*sum psi_j |beta_j|
  int max_sweeps = 1000;
  double kkt_tol = 1e-7;
  bool track_objective = false;
};

struct LogisticLassoResult {
  double intercept = 0.0;
  Eigen::VectorXd beta;
  int sweeps = 0;
  bool converged = false;
  double objective = 0.0;
  double max_kkt_violation = 0.0;
  std::vector<double> objective_trace;  // filled when track_objective is set
};

namespace detail {

template <class Link>
double glm_objective(const Eigen::VectorXd& eta, const Eigen::VectorXd& z,
                     const Eigen::VectorXd& beta, const Eigen::VectorXd& loadings,
                     double lambda) {
  const auto n = eta.size();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) loss += Link::loss(eta[i], z[i]);
  loss /= static_cast<double>(n);
  double pen = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) pen += loadings[j] * std::abs(beta[j]);
  return loss + lambda / static_cast<double>(n) * pen;
}

}  // namespace detail

// Weighted-ell1 penalized binary regression by cyclic coordinate descent on
// the quadratic majorization of the loss, with an active-set strategy and an
// always-unpenalized intercept. Convergence is declared only after a full KKT
// pass over every coordinate.
template <class Link>
LogisticLassoResult penalized_binary_lasso(const Eigen::MatrixXd& B,
                                           const Eigen::VectorXd& z,
                                           const Eigen::VectorXd& loadings,
                                           const LogisticLassoOptions& opt,
                                           const LogisticLassoResult* warm = nullptr) {
  const auto n = B.rows();
  const auto p = B.cols();
  if (z.size() != n) throw DataError("penalized_binary_lasso: response length mismatch");
  if (loadings.size() != p)
    throw DataError("penalized_binary_lasso: loadings length mismatch");
  for (Eigen::Index j = 0; j < p; ++j)
    if (!(loadings[j] > 0.0))
      throw ConfigError("penalized_binary_lasso: loadings must be strictly positive");

  const double ninv = 1.0 / static_cast<double>(n);
  const double w_bound = Link::curv_bound;
  Eigen::VectorXd curv(p);
  for (Eigen::Index j = 0; j < p; ++j) curv[j] = w_bound * B.col(j).squaredNorm() * ninv;

  LogisticLassoResult res;
  res.beta = Eigen::VectorXd::Zero(p);
  if (warm && warm->beta.size() == p) {
    res.beta = warm->beta;
    res.intercept = warm->intercept;
  } else {
    const double zbar = std::min(std::max(z.mean(), 1e-12), 1.0 - 1e-12);
    res.intercept = std::log(zbar / (1.0 - zbar));
  }

  Eigen::VectorXd eta = Eigen::VectorXd::Constant(n, res.intercept);
  for (Eigen::Index j = 0; j < p; ++j)
    if (res.beta[j] != 0.0) eta += B.col(j) * res.beta[j];
  Eigen::VectorXd gvec(n);  // per-observation dNLL/deta
  auto refresh = [&] {
    for (Eigen::Index i = 0; i < n; ++i) gvec[i] = Link::grad_eta(eta[i], z[i]);
  };
  refresh();

  std::vector<Eigen::Index> active;
  std::vector<char> in_active(static_cast<std::size_t>(p), 0);
  for (Eigen::Index j = 0; j < p; ++j)
    if (res.beta[j] != 0.0) {
      active.push_back(j);
      in_active[static_cast<std::size_t>(j)] = 1;
    }

  const double lam_n = opt.lambda * ninv;
  auto coord_tol = [&](Eigen::Index j) {
    return opt.kkt_tol * std::max(1.0, lam_n * loadings[j]);
  };

  int sweeps = 0;
  bool converged = false;
  double max_viol = 0.0;
  Eigen::VectorXd grad(p);

  while (sweeps < opt.max_sweeps) {
    for (;;) {  // inner sweeps on the active set
      if (sweeps >= opt.max_sweeps) break;
      ++sweeps;
      double max_step = 0.0;

      const double g0 = gvec.mean();
      if (g0 != 0.0) {
        const double d0 = -g0 / w_bound;
        res.intercept += d0;
        eta.array() += d0;
        refresh();
        max_step = std::max(max_step, std::abs(d0) * std::sqrt(w_bound));
      }

      for (Eigen::Index j : active) {
        if (curv[j] <= 0.0) continue;
        const double gj = B.col(j).dot(gvec) * ninv;
        const double u = curv[j] * res.beta[j] - gj;
        const double v = soft_threshold(u, lam_n * loadings[j]) / curv[j];
        const double delta = v - res.beta[j];
        if (delta != 0.0) {
          res.beta[j] = v;
          eta += B.col(j) * delta;
          refresh();
          max_step = std::max(max_step, std::abs(delta) * std::sqrt(curv[j]));
        }
      }

      if (opt.track_objective)
        res.objective_trace.push_back(
            detail::glm_objective<Link>(eta, z, res.beta, loadings, opt.lambda));
      if (max_step <= 0.1 * opt.kkt_tol) break;
    }

    grad.noalias() = B.transpose() * gvec;
    grad *= ninv;
    max_viol = std::abs(gvec.mean()) / w_bound;
    bool any_violation = false;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double thr = lam_n * loadings[j];
      double viol;
      if (res.beta[j] == 0.0)
        viol = std::max(0.0, std::abs(grad[j]) - thr);
      else
        viol = std::abs(grad[j] + thr * (res.beta[j] > 0.0 ? 1.0 : -1.0));
      if (viol > coord_tol(j)) {
        any_violation = true;
        max_viol = std::max(max_viol, viol);
        if (!in_active[static_cast<std::size_t>(j)]) {
          active.push_back(j);
          in_active[static_cast<std::size_t>(j)] = 1;
        }
      }
    }
    if (!any_violation) {
      converged = true;
      break;
    }
    if (sweeps >= opt.max_sweeps) break;
  }

  res.sweeps = sweeps;
  res.converged = converged;
  res.max_kkt_violation = max_viol;
  res.objective = detail::glm_objective<Link>(eta, z, res.beta, loadings, opt.lambda);
  if (!converged)
    throw NumericError("penalized_binary_lasso: no convergence after " +
                       std::to_string(sweeps) + " sweeps; objective " +
                       std::to_string(res.objective) + ", max KKT violation " +
                       std::to_string(max_viol));
  return res;
}

inline LogisticLassoResult logistic_lasso(const Eigen::MatrixXd& B,
                                          const Eigen::VectorXd& z,
                                          const Eigen::VectorXd& loadings,
                                          const LogisticLassoOptions& opt,
                                          const LogisticLassoResult* warm = nullptr) {
  return penalized_binary_lasso<LogitLink>(B, z, loadings, opt, warm);
}

struct NewtonLogisticResult {
  double intercept = 0.0;
  Eigen::VectorXd beta;  // over the supplied columns
  bool converged = false;
  bool separation = false;
  int iterations = 0;
};

// Unpenalized MLE on a column subset, IRLS/Newton with step halving.
// Non-finite or runaway iterates are reported as separation instead of being
// ridged away.
template <class Link>
NewtonLogisticResult newton_glm(const Eigen::MatrixXd& Bsub, const Eigen::VectorXd& z,
                                double grad_tol = 1e-8, int max_iter = 200) {
  const auto n = Bsub.rows();
  const auto s = Bsub.cols();
  Eigen::MatrixXd A(n, s + 1);
  A.col(0).setOnes();
  if (s > 0) A.rightCols(s) = Bsub;

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(s + 1);
  const double zbar = std::min(std::max(z.mean(), 1e-12), 1.0 - 1e-12);
  theta[0] = std::log(zbar / (1.0 - zbar));

  const double ninv = 1.0 / static_cast<double>(n);
  Eigen::VectorXd eta = A * theta, gvec(n), w(n);
  auto objective = [&](const Eigen::VectorXd& e) {
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) loss += Link::loss(e[i], z[i]);
    return loss * ninv;
  };

  NewtonLogisticResult res;
  double obj = objective(eta);
  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;
    for (Eigen::Index i = 0; i < n; ++i) {
      gvec[i] = Link::grad_eta(eta[i], z[i]);
      w[i] = Link::irls_weight(eta[i]);
    }
    Eigen::VectorXd g = A.transpose() * gvec * ninv;
    if (g.lpNorm<Eigen::Infinity>() <= grad_tol) {
      res.converged = true;
      break;
    }
    Eigen::MatrixXd H = A.transpose() * w.asDiagonal() * A * ninv;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success) {
      res.separation = true;
      break;
    }
    Eigen::VectorXd step = ldlt.solve(g);
    if (!step.allFinite()) {
      res.separation = true;
      break;
    }
    double t = 1.0;
    Eigen::VectorXd theta_new, eta_new;
    bool accepted = false;
    for (int half = 0; half < 40; ++half) {
      theta_new = theta - t * step;
      eta_new = A * theta_new;
      const double obj_new = objective(eta_new);
      if (obj_new <= obj + 1e-14) {
        obj = obj_new;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      res.separation = true;
      break;
    }
    theta = theta_new;
    eta = eta_new;
    if (theta.lpNorm<Eigen::Infinity>() > 40.0) {
      res.separation = true;  // fitted probabilities saturated: MLE diverges
      break;
    }
  }

  // A gradient that vanishes because every observation is fitted exactly is
  // separation, not convergence: the MLE is not finite.
  double max_resid = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    max_resid = std::max(max_resid, std::abs(z[i] - Link::inv(eta[i])));
  if (max_resid < 1e-6) {
    res.separation = true;
    res.converged = false;
  }

  res.intercept = theta[0];
  res.beta = s > 0 ? Eigen::VectorXd(theta.tail(s)) : Eigen::VectorXd();
  return res;
}

inline NewtonLogisticResult newton_logistic(const Eigen::MatrixXd& Bsub,
                                            const Eigen::VectorXd& z,
                                            double grad_tol = 1e-8, int max_iter = 200) {
  return newton_glm<LogitLink>(Bsub, z, grad_tol, max_iter);
}

}  // namespace ocppe
