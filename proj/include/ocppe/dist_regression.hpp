#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ocppe/basis.hpp"
#include "ocppe/logistic_lasso.hpp"
#include "ocppe/math.hpp"
#include "ocppe/quantile_density.hpp"

namespace ocppe {

enum class LinkKind { Logistic, Probit };

inline double link_inv(LinkKind k, double eta) {
  return k == LinkKind::Logistic ? LogitLink::inv(eta) : ProbitLink::inv(eta);
}
inline double link_density(LinkKind k, double eta) {
  return k == LinkKind::Logistic ? LogitLink::density(eta) : ProbitLink::density(eta);
}

// lambda_beta = 1.1 sqrt(n) Phi^{-1}(1 - (0.1/log n)/(2 p_b n))
inline double penalty_level_beta(Eigen::Index n, Eigen::Index p_b) {
  if (n < 2 || p_b < 1) throw ConfigError("penalty_level_beta: need n >= 2, p_b >= 1");
  const double nn = static_cast<double>(n);
  const double tail = (0.1 / std::log(nn)) / (2.0 * static_cast<double>(p_b) * nn);
  return 1.1 * std::sqrt(nn) * norm_quantile(1.0 - tail);
}

// Penalty loadings psi_j = sqrt((1/n) sum b_j^2 (z - Lambda)^2), floored at
// 1e-8 for degenerate perfect-fit columns. The initial pass uses the constant
// fit Lambda = mean(z).
inline Eigen::VectorXd penalty_loadings(const Eigen::MatrixXd& B,
                                        const Eigen::VectorXd& z,
                                        const Eigen::VectorXd& fitted_prob) {
  const auto n = B.rows();
  const auto p = B.cols();
  Eigen::VectorXd resid2 = (z - fitted_prob).array().square();
  Eigen::VectorXd out(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double v = (B.col(j).array().square() * resid2.array()).mean();
    out[j] = std::max(std::sqrt(v), 1e-8);
  }
  (void)n;
  return out;
}

inline Eigen::VectorXd penalty_loadings_initial(const Eigen::MatrixXd& B,
                                                const Eigen::VectorXd& z) {
  return penalty_loadings(B, z, Eigen::VectorXd::Constant(B.rows(), z.mean()));
}

struct DrConfig {
  int grid_points = 100;  // J; the grid has J+1 levels including both quantiles
  int loading_rounds = 2; // initial conservative pass + refinements
  LinkKind link = LinkKind::Logistic;
  double lambda_override = 0.0;  // > 0 replaces the plug-in formula
  int max_sweeps = 1000;
  double kkt_tol = 1e-7;

  void validate() const {
    if (grid_points < 2) throw ConfigError("DrConfig: grid_points must be >= 2");
    if (loading_rounds < 1) throw ConfigError("DrConfig: loading_rounds must be >= 1");
  }
};

// Fit at one grid level y: lasso stage and post-lasso refit, both sparse.
struct DrPointFit {
  double y = 0.0;
  bool degenerate = false;       // all indicators equal at this level
  double degenerate_value = 0.0;
  std::vector<Eigen::Index> support;  // lasso support, ascending
  Eigen::VectorXd lasso_coef;         // on support
  double lasso_intercept = 0.0;
  Eigen::VectorXd coef;               // post-lasso on the same support
  double intercept = 0.0;
  bool separation_fallback = false;   // post-lasso MLE diverged; lasso kept
  Eigen::VectorXd loadings;           // final penalty loadings, full length p
  int sweeps = 0;
};

struct DRGridFit {
  BasisMap map;
  LinkKind link = LinkKind::Logistic;
  double tau1 = 0.0, tau2 = 0.0;
  double q1 = 0.0, q2 = 0.0;  // estimated quantiles; grid endpoints exactly
  double dy = 0.0;
  double lambda_beta = 0.0;
  std::vector<DrPointFit> points;  // J+1 fits

  int grid_points() const { return static_cast<int>(points.size()) - 1; }
};

namespace detail {

inline void dr_fit_point(const Eigen::MatrixXd& B, const Eigen::VectorXd& z,
                         double lambda, const DrConfig& cfg, DrPointFit& out,
                         LogisticLassoResult& warm, bool have_warm) {
  const auto p = B.cols();
  const double zbar = z.mean();
  if (zbar <= 0.0 || zbar >= 1.0) {
    out.degenerate = true;
    out.degenerate_value = zbar;
    out.support.clear();
    out.lasso_coef.resize(0);
    out.coef.resize(0);
    out.loadings = Eigen::VectorXd::Zero(p);
    return;
  }

  LogisticLassoOptions opt;
  opt.lambda = lambda;
  opt.max_sweeps = cfg.max_sweeps;
  opt.kkt_tol = cfg.kkt_tol;

  Eigen::VectorXd loadings = penalty_loadings_initial(B, z);
  LogisticLassoResult fit;
  for (int round = 0; round < cfg.loading_rounds; ++round) {
    const LogisticLassoResult* w = (round > 0) ? &fit : (have_warm ? &warm : nullptr);
    fit = cfg.link == LinkKind::Logistic
              ? penalized_binary_lasso<LogitLink>(B, z, loadings, opt, w)
              : penalized_binary_lasso<ProbitLink>(B, z, loadings, opt, w);
    if (round + 1 < cfg.loading_rounds) {
      Eigen::VectorXd prob(B.rows());
      Eigen::VectorXd eta = Eigen::VectorXd::Constant(B.rows(), fit.intercept);
      for (Eigen::Index j = 0; j < p; ++j)
        if (fit.beta[j] != 0.0) eta += B.col(j) * fit.beta[j];
      for (Eigen::Index i = 0; i < B.rows(); ++i) prob[i] = link_inv(cfg.link, eta[i]);
      loadings = penalty_loadings(B, z, prob);
    }
  }
  warm = fit;

  out.support.clear();
  for (Eigen::Index j = 0; j < p; ++j)
    if (fit.beta[j] != 0.0) out.support.push_back(j);
  const auto s = static_cast<Eigen::Index>(out.support.size());
  out.lasso_coef.resize(s);
  for (Eigen::Index k = 0; k < s; ++k) out.lasso_coef[k] = fit.beta[out.support[k]];
  out.lasso_intercept = fit.intercept;
  out.loadings = loadings;
  out.sweeps = fit.sweeps;

  Eigen::MatrixXd Bsub(B.rows(), s);
  for (Eigen::Index k = 0; k < s; ++k) Bsub.col(k) = B.col(out.support[k]);
  const NewtonLogisticResult post =
      cfg.link == LinkKind::Logistic ? newton_glm<LogitLink>(Bsub, z)
                                     : newton_glm<ProbitLink>(Bsub, z);
  if (post.separation || !post.converged) {
    out.separation_fallback = true;
    out.coef = out.lasso_coef;
    out.intercept = out.lasso_intercept;
  } else {
    out.coef = post.beta;
    out.intercept = post.intercept;
  }
}

}  // namespace detail

inline Eigen::VectorXd lasso_dr_fit(const Eigen::MatrixXd& B, const Eigen::VectorXd& y,
                                    double level, double lambda,
                                    const Eigen::VectorXd& loadings,
                                    const DrConfig& cfg = {}) {
  Eigen::VectorXd z(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) z[i] = y[i] <= level ? 1.0 : 0.0;
  LogisticLassoOptions opt;
  opt.lambda = lambda;
  opt.max_sweeps = cfg.max_sweeps;
  opt.kkt_tol = cfg.kkt_tol;
  const auto fit = cfg.link == LinkKind::Logistic
                       ? penalized_binary_lasso<LogitLink>(B, z, loadings, opt)
                       : penalized_binary_lasso<ProbitLink>(B, z, loadings, opt);
  Eigen::VectorXd full(B.cols() + 1);
  full[0] = fit.intercept;
  full.tail(B.cols()) = fit.beta;
  return full;
}

// Post-lasso refit: unpenalized MLE restricted to `support`, zeros elsewhere.
// Returns (intercept, coefficients over support); separation reported so the
// caller can fall back to the lasso stage.
inline NewtonLogisticResult post_lasso_refit(const Eigen::MatrixXd& B,
                                             const Eigen::VectorXd& z,
                                             const std::vector<Eigen::Index>& support,
                                             LinkKind link = LinkKind::Logistic) {
  Eigen::MatrixXd Bsub(B.rows(), static_cast<Eigen::Index>(support.size()));
  for (std::size_t k = 0; k < support.size(); ++k)
    Bsub.col(static_cast<Eigen::Index>(k)) = B.col(support[k]);
  return link == LinkKind::Logistic ? newton_glm<LogitLink>(Bsub, z)
                                    : newton_glm<ProbitLink>(Bsub, z);
}

// Distribution-regression grid fit: levels y_j = Qhat(tau1) + j*dy,
// j = 0..J, with both
// quantiles fitted exactly as the grid endpoints. Fits run sequentially along
// the grid and warm-start from the neighbouring level.
inline DRGridFit fit_grid(const DesignMatrix& design, const Eigen::VectorXd& y,
                          double tau1, double tau2, const DrConfig& cfg = {}) {
  cfg.validate();
  const auto n = design.n();
  if (y.size() != n) throw DataError("fit_grid: outcome length mismatch");

  DRGridFit fit;
  fit.map = design.map;
  fit.link = cfg.link;
  fit.tau1 = tau1;
  fit.tau2 = tau2;
  fit.q1 = estimate_quantile(y, tau1).q_hat;
  fit.q2 = estimate_quantile(y, tau2).q_hat;
  if (!(fit.q2 > fit.q1))
    throw NumericError("fit_grid: degenerate quantile range [" +
                       std::to_string(fit.q1) + ", " + std::to_string(fit.q2) + "]");
  const int J = cfg.grid_points;
  fit.dy = (fit.q2 - fit.q1) / J;
  fit.lambda_beta =
      cfg.lambda_override > 0.0 ? cfg.lambda_override : penalty_level_beta(n, design.p());

  fit.points.resize(static_cast<std::size_t>(J) + 1);
  LogisticLassoResult warm;
  bool have_warm = false;
  Eigen::VectorXd z(n);
  for (int j = 0; j <= J; ++j) {
    const double level = (j == J) ? fit.q2 : fit.q1 + j * fit.dy;
    auto& pt = fit.points[static_cast<std::size_t>(j)];
    pt.y = level;
    for (Eigen::Index i = 0; i < n; ++i) z[i] = y[i] <= level ? 1.0 : 0.0;
    detail::dr_fit_point(design.b, z, fit.lambda_beta, cfg, pt, warm, have_warm);
    have_warm = !pt.degenerate;
  }
  return fit;
}

// Per-observation functionals of a fitted grid, evaluated on a cached design
// (training data or held-out folds expanded through the same BasisMap).
// PostLasso is the refit used throughout the DML pipeline; Lasso exposes the
// penalized stage, which the naive plug-in reports.
enum class DrStage { PostLasso, Lasso };

struct DrSampleEval {
  Eigen::VectorXd if_hat;   // integral of F over [q1, q2]
  Eigen::VectorXd idf_hat;  // integral of dF/dd over [q1, q2]
  Eigen::VectorXd df_q1;    // dF/dd at the lower quantile
  Eigen::VectorXd df_q2;    // dF/dd at the upper quantile
};

inline DrSampleEval dr_evaluate_design(const DRGridFit& fit, const DesignMatrix& design,
                                       DrStage stage = DrStage::PostLasso) {
  const auto n = design.n();
  const int J = fit.grid_points();
  DrSampleEval out;
  out.if_hat = Eigen::VectorXd::Zero(n);
  out.idf_hat = Eigen::VectorXd::Zero(n);
  out.df_q1 = Eigen::VectorXd::Zero(n);
  out.df_q2 = Eigen::VectorXd::Zero(n);

  Eigen::VectorXd eta(n), dlin(n);
  for (int j = 0; j <= J; ++j) {
    const auto& pt = fit.points[static_cast<std::size_t>(j)];
    const Eigen::VectorXd& coef = stage == DrStage::PostLasso ? pt.coef : pt.lasso_coef;
    const double intercept =
        stage == DrStage::PostLasso ? pt.intercept : pt.lasso_intercept;
    Eigen::VectorXd f(n), df(n);
    if (pt.degenerate) {
      f.setConstant(pt.degenerate_value);
      df.setZero();
    } else {
      eta.setConstant(intercept);
      dlin.setZero();
      for (Eigen::Index k = 0; k < coef.size(); ++k) {
        const auto col = pt.support[static_cast<std::size_t>(k)];
        eta += design.b.col(col) * coef[k];
        dlin += design.b_ddot.col(col) * coef[k];
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        f[i] = link_inv(fit.link, eta[i]);
        df[i] = link_density(fit.link, eta[i]) * dlin[i];
      }
    }
    if (j >= 1) {
      out.if_hat += f * fit.dy;
      out.idf_hat += df * fit.dy;
    }
    if (j == 0) out.df_q1 = df;
    if (j == J) out.df_q2 = df;
  }
  return out;
}

namespace detail {

inline std::pair<double, double> dr_point_fd(const DRGridFit& fit, int j, double d,
                                             const double* x) {
  const auto& pt = fit.points[static_cast<std::size_t>(j)];
  if (pt.degenerate) return {pt.degenerate_value, 0.0};
  thread_local std::vector<double> b, bd;
  b.resize(static_cast<std::size_t>(fit.map.dim()));
  bd.resize(static_cast<std::size_t>(fit.map.dim()));
  fit.map.expand(d, x, b.data());
  fit.map.expand_ddot(d, x, bd.data());
  double eta = pt.intercept, dlin = 0.0;
  for (Eigen::Index k = 0; k < pt.coef.size(); ++k) {
    const auto col = static_cast<std::size_t>(pt.support[static_cast<std::size_t>(k)]);
    eta += b[col] * pt.coef[k];
    dlin += bd[col] * pt.coef[k];
  }
  return {link_inv(fit.link, eta), link_density(fit.link, eta) * dlin};
}

}  // namespace detail

// Point evaluations at arbitrary (d, x); grid level j in 0..J.
inline double F_hat(const DRGridFit& fit, int j, double d, const Eigen::VectorXd& x) {
  return detail::dr_point_fd(fit, j, d, x.data()).first;
}
inline double DF_hat(const DRGridFit& fit, int j, double d, const Eigen::VectorXd& x) {
  return detail::dr_point_fd(fit, j, d, x.data()).second;
}
inline double IF_hat(const DRGridFit& fit, double d, const Eigen::VectorXd& x) {
  double acc = 0.0;
  for (int j = 1; j <= fit.grid_points(); ++j)
    acc += detail::dr_point_fd(fit, j, d, x.data()).first;
  return acc * fit.dy;
}
inline double IDF_hat(const DRGridFit& fit, double d, const Eigen::VectorXd& x) {
  double acc = 0.0;
  for (int j = 1; j <= fit.grid_points(); ++j)
    acc += detail::dr_point_fd(fit, j, d, x.data()).second;
  return acc * fit.dy;
}

}  // namespace ocppe
