#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ocppe/basis.hpp"
#include "ocppe/math.hpp"

namespace ocppe {

// lambda_gamma = A sqrt(log(p_h v n)/n) with A = log(log n); the max rule
// keeps selection errors controlled uniformly over the intervention family.
inline double penalty_level_gamma(Eigen::Index n, Eigen::Index p_h,
                                  double a_override = 0.0) {
  if (n < 16) throw ConfigError("penalty_level_gamma: need n >= 16");
  const double nn = static_cast<double>(n);
  const double a = a_override > 0.0 ? a_override : std::log(std::log(nn));
  return a * std::sqrt(std::log(std::max<double>(static_cast<double>(p_h), nn)) / nn);
}

struct RieszMoments {
  Eigen::VectorXd m;  // -(1/n) sum d/dD h(D_i,X_i) * vartheta_i
  Eigen::MatrixXd g;  // (1/n) sum h h'
};

inline RieszMoments build_moments(const DesignMatrix& design,
                                  const Eigen::VectorXd& vartheta) {
  if (vartheta.size() != design.n())
    throw DataError("build_moments: vartheta length mismatch");
  RieszMoments out;
  const double ninv = 1.0 / static_cast<double>(design.n());
  out.m = -(design.b_ddot.transpose() * vartheta) * ninv;
  out.g = Eigen::MatrixXd::Zero(design.p(), design.p());
  out.g.selfadjointView<Eigen::Lower>().rankUpdate(design.b.transpose(), ninv);
  out.g.triangularView<Eigen::Upper>() = out.g.transpose();
  return out;
}

struct RieszOptions {
  int max_sweeps = 20000;
  double kkt_tol = 1e-9;  // relative to max(lambda, ||M||_inf)
  // Unpenalized minimum-distance refit on the selected support. The lasso
  // stage selects; the refit removes its shrinkage bias, mirroring the
  // post-lasso treatment of the distribution regression.
  bool post_lasso = true;
  bool track_objective = false;
};

struct RieszFit {
  Eigen::VectorXd gamma;        // coefficients used for L_hat (refit when enabled)
  Eigen::VectorXd gamma_lasso;  // the lasso-stage solution; KKT holds here
  double lambda_gamma = 0.0;
  std::vector<double> sigma;
  std::vector<Eigen::Index> support;
  int sweeps = 0;
  bool converged = false;
  bool refit_fallback = false;  // refit system was singular; lasso kept
  double objective = 0.0;
  double max_kkt_violation = 0.0;
  std::vector<double> objective_trace;  // per sweep, when tracking is on
};

// Lasso minimum-distance estimation of the Riesz representer:
//   gamma_hat = argmin -2 M'gamma + gamma'G gamma + 2 lambda ||gamma||_1.
// Exact per-coordinate soft-threshold updates on the quadratic objective with
// an active-set strategy; the running G*gamma product is refreshed from
// scratch periodically to cap accumulated drift.
inline RieszFit lasso_md_fit(const RieszMoments& mom, double lambda,
                             const RieszOptions& opt = {},
                             const RieszFit* warm = nullptr) {
  const auto p = mom.m.size();
  if (mom.g.rows() != p || mom.g.cols() != p)
    throw DataError("lasso_md_fit: moment dimensions disagree");
  if (lambda < 0.0) throw ConfigError("lasso_md_fit: lambda must be nonnegative");

  RieszFit res;
  res.lambda_gamma = lambda;
  res.gamma = Eigen::VectorXd::Zero(p);
  if (warm && warm->gamma.size() == p) res.gamma = warm->gamma;

  Eigen::VectorXd q = mom.g * res.gamma;  // G * gamma
  const double scale = std::max(lambda, mom.m.lpNorm<Eigen::Infinity>());
  const double tol = opt.kkt_tol * std::max(scale, 1e-300);

  std::vector<Eigen::Index> active;
  std::vector<char> in_active(static_cast<std::size_t>(p), 0);
  for (Eigen::Index j = 0; j < p; ++j)
    if (res.gamma[j] != 0.0) {
      active.push_back(j);
      in_active[static_cast<std::size_t>(j)] = 1;
    }

  int sweeps = 0;
  bool converged = false;
  double max_viol = 0.0;
  int refresh_countdown = 64;

  while (sweeps < opt.max_sweeps) {
    for (;;) {  // inner sweeps on the active set
      if (sweeps >= opt.max_sweeps) break;
      ++sweeps;
      double max_step = 0.0;
      for (Eigen::Index j : active) {
        const double gjj = mom.g(j, j);
        if (gjj <= 0.0) continue;
        const double c = mom.m[j] - q[j] + gjj * res.gamma[j];
        const double v = soft_threshold(c, lambda) / gjj;
        const double delta = v - res.gamma[j];
        if (delta != 0.0) {
          res.gamma[j] = v;
          q += mom.g.col(j) * delta;
          max_step = std::max(max_step, std::abs(delta) * std::sqrt(gjj));
        }
      }
      if (--refresh_countdown <= 0) {
        q.noalias() = mom.g * res.gamma;
        refresh_countdown = 64;
      }
      if (opt.track_objective)
        res.objective_trace.push_back(-2.0 * mom.m.dot(res.gamma) +
                                      res.gamma.dot(mom.g * res.gamma) +
                                      2.0 * lambda * res.gamma.lpNorm<1>());
      if (max_step <= 0.01 * tol) break;
    }

    q.noalias() = mom.g * res.gamma;  // exact product before the KKT pass
    bool any_violation = false;
    max_viol = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double r = mom.m[j] - q[j];
      double viol;
      if (res.gamma[j] == 0.0)
        viol = std::max(0.0, std::abs(r) - lambda);
      else
        viol = std::abs(r - lambda * (res.gamma[j] > 0.0 ? 1.0 : -1.0));
      if (viol > tol) {
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
  res.objective = -2.0 * mom.m.dot(res.gamma) + res.gamma.dot(mom.g * res.gamma) +
                  2.0 * lambda * res.gamma.lpNorm<1>();
  if (!converged)
    throw NumericError("lasso_md_fit: no convergence after " + std::to_string(sweeps) +
                       " sweeps; objective " + std::to_string(res.objective) +
                       ", max KKT violation " + std::to_string(max_viol));
  res.support.clear();
  for (Eigen::Index j = 0; j < p; ++j)
    if (res.gamma[j] != 0.0) res.support.push_back(j);
  res.gamma_lasso = res.gamma;

  if (opt.post_lasso && !res.support.empty()) {
    const auto s = static_cast<Eigen::Index>(res.support.size());
    Eigen::MatrixXd gss(s, s);
    Eigen::VectorXd ms(s);
    for (Eigen::Index a = 0; a < s; ++a) {
      ms[a] = mom.m[res.support[static_cast<std::size_t>(a)]];
      for (Eigen::Index b = 0; b < s; ++b)
        gss(a, b) = mom.g(res.support[static_cast<std::size_t>(a)],
                          res.support[static_cast<std::size_t>(b)]);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gss);
    const Eigen::VectorXd refit = ldlt.solve(ms);
    if (ldlt.info() == Eigen::Success && refit.allFinite()) {
      res.gamma.setZero();
      for (Eigen::Index a = 0; a < s; ++a)
        res.gamma[res.support[static_cast<std::size_t>(a)]] = refit[a];
    } else {
      res.refit_fallback = true;
    }
  }
  return res;
}

inline Eigen::VectorXd riesz_evaluate_design(const RieszFit& fit,
                                             const DesignMatrix& design) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(design.n());
  for (Eigen::Index j : fit.support) out += design.b.col(j) * fit.gamma[j];
  return out;
}

inline double L_hat(const RieszFit& fit, const BasisMap& map, double d,
                    const Eigen::VectorXd& x) {
  thread_local std::vector<double> buf;
  buf.resize(static_cast<std::size_t>(map.dim()));
  map.expand(d, x.data(), buf.data());
  double acc = 0.0;
  for (Eigen::Index j : fit.support) acc += buf[static_cast<std::size_t>(j)] * fit.gamma[j];
  return acc;
}

}  // namespace ocppe
