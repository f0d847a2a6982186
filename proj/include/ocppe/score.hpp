#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ocppe/basis.hpp"
#include "ocppe/data.hpp"
#include "ocppe/dist_regression.hpp"
#include "ocppe/intervention.hpp"
#include "ocppe/quantile_density.hpp"
#include "ocppe/riesz.hpp"

namespace ocppe {

inline constexpr double kZ975 = 1.959963984540054;  // Phi^{-1}(0.975)

struct EstimatorConfig {
  BasisSpec basis;
  DrConfig dr;
  DensityConfig density;
  RieszOptions riesz;
  BasisSpec riesz_basis;          // used only when riesz_separate_basis is set
  bool riesz_separate_basis = false;
  double lambda_gamma_override = 0.0;
  double riesz_a = 0.0;           // A in lambda_gamma; 0 keeps log(log n)
  bool center_treatment = false;  // subtract mean(d) inside the basis expansion
};

struct OcppeDiagnostics {
  Eigen::Index dr_support_total = 0;
  int dr_degenerate_points = 0;
  int dr_separation_fallbacks = 0;
  Eigen::Index riesz_support = 0;
  int riesz_sweeps = 0;
  Eigen::Index trimmed = 0;
  std::vector<std::string> flags;
};

struct OcppeResult {
  double theta_hat = 0.0;
  Eigen::VectorXd scores;  // psi_hat_i, mean zero at theta_hat
  double se_analytic = 0.0;
  double ci_lo = 0.0, ci_hi = 0.0;
  IndexU index;
  Eigen::Index n = 0;
  std::string estimator;  // "dml", "naive", "dist-perturbation"
  OcppeDiagnostics diag;
};

// Everything fitted on one sample for one index u: the unconditional
// quantiles and densities, the distribution-regression grid (endpoints are
// the exact quantile fits), the Riesz representer, and the two averaged
// quantile-correction numerators of the score.
struct NuisanceFit {
  QuantileFit q1, q2;
  DensityFit f1, f2;
  DRGridFit dr;
  RieszFit riesz;
  BasisMap riesz_map;   // basis the representer was fit on (defaults to dr.map)
  double gamma1 = 0.0;  // (1/n) sum vartheta_j * DF(D_j, X_j; q1)
  double gamma2 = 0.0;
  IndexU index;
  Intervention intervention;
  OcppeDiagnostics diag;
};

// closed form of the indicator integral over [q1, q2]
inline double indicator_integral(double y, double q1, double q2) {
  return std::max(0.0, q2 - std::max(y, q1));
}

inline DesignMatrix build_design_from_map(const Dataset& data, const BasisMap& map) {
  const auto n = data.n();
  DesignMatrix out;
  out.map = map;
  out.b.resize(n, map.dim());
  out.b_ddot.resize(n, map.dim());
  std::vector<double> row(static_cast<std::size_t>(map.dim()));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd xr = data.x.row(i);
    map.expand(data.d[i], xr.data(), row.data());
    for (Eigen::Index k = 0; k < map.dim(); ++k) out.b(i, k) = row[static_cast<std::size_t>(k)];
    map.expand_ddot(data.d[i], xr.data(), row.data());
    for (Eigen::Index k = 0; k < map.dim(); ++k)
      out.b_ddot(i, k) = row[static_cast<std::size_t>(k)];
  }
  return out;
}

inline NuisanceFit fit_nuisances(const Dataset& data, const IndexU& u,
                                 const Intervention& g, const EstimatorConfig& cfg) {
  data.validate();
  u.validate();
  g.validate_on(data);

  NuisanceFit nf;
  nf.index = u;
  nf.intervention = g;

  const double center = cfg.center_treatment ? data.d.mean() : 0.0;
  const DesignMatrix design = build_design(data, cfg.basis, center);
  const Eigen::VectorXd theta_v = vartheta_vector(g, data);

  nf.q1 = estimate_quantile(data.y, u.tau1);
  nf.q2 = estimate_quantile(data.y, u.tau2);
  nf.f1 = estimate_density(data.y, nf.q1.q_hat, cfg.density);
  nf.f2 = estimate_density(data.y, nf.q2.q_hat, cfg.density);
  if (nf.f1.f_hat <= 1e-12 || nf.f2.f_hat <= 1e-12)
    throw NumericError("fit_nuisances: estimated outcome density is degenerate at a quantile");

  nf.dr = fit_grid(design, data.y, u.tau1, u.tau2, cfg.dr);
  const DrSampleEval eval = dr_evaluate_design(nf.dr, design);
  nf.gamma1 = (theta_v.array() * eval.df_q1.array()).mean();
  nf.gamma2 = (theta_v.array() * eval.df_q2.array()).mean();

  const DesignMatrix* riesz_design = &design;
  DesignMatrix riesz_design_storage;
  if (cfg.riesz_separate_basis) {
    riesz_design_storage = build_design(data, cfg.riesz_basis, center);
    riesz_design = &riesz_design_storage;
  }
  nf.riesz_map = riesz_design->map;
  const RieszMoments mom = build_moments(*riesz_design, theta_v);
  const double lambda_gamma =
      cfg.lambda_gamma_override > 0.0
          ? cfg.lambda_gamma_override
          : penalty_level_gamma(data.n(), riesz_design->p(), cfg.riesz_a);
  nf.riesz = lasso_md_fit(mom, lambda_gamma, cfg.riesz);
  nf.riesz.sigma = u.sigma;

  for (const auto& pt : nf.dr.points) {
    nf.diag.dr_support_total += static_cast<Eigen::Index>(pt.support.size());
    if (pt.degenerate) ++nf.diag.dr_degenerate_points;
    if (pt.separation_fallback) ++nf.diag.dr_separation_fallbacks;
  }
  if (nf.diag.dr_degenerate_points > 0) nf.diag.flags.push_back("dr-degenerate-grid-point");
  if (nf.diag.dr_separation_fallbacks > 0) nf.diag.flags.push_back("dr-separation-fallback");
  nf.diag.riesz_support = static_cast<Eigen::Index>(nf.riesz.support.size());
  nf.diag.riesz_sweeps = nf.riesz.sweeps;
  return nf;
}

// Theta-free part of the orthogonal score in its sample form, given
// per-observation nuisance values. Shared by the full-sample estimator, the
// cross-fitted policy signals and the uniform-test drivers.
inline Eigen::VectorXd assemble_signals(const Eigen::VectorXd& y,
                                        const Eigen::VectorXd& theta_v,
                                        const DrSampleEval& eval,
                                        const Eigen::VectorXd& l_hat, double q1,
                                        double q2, double f1, double f2, double gamma1,
                                        double gamma2, const IndexU& u) {
  const auto n = y.size();
  const double inv_gap = 1.0 / (u.tau2 - u.tau1);
  const double g1f = gamma1 / f1;
  const double g2f = gamma2 / f2;
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double i1 = indicator_integral(y[i], q1, q2);
    const double ind1 = y[i] <= q1 ? 1.0 : 0.0;
    const double ind2 = y[i] <= q2 ? 1.0 : 0.0;
    w[i] = inv_gap * (-theta_v[i] * eval.idf_hat[i] -
                      l_hat[i] * (eval.if_hat[i] - i1) - g1f * (ind1 - u.tau1) +
                      g2f * (ind2 - u.tau2));
  }
  return w;
}

// Uncentered welfare signals w_i: the theta-free part of the orthogonal
// score. mean(w) over the fitting sample is the DML estimate; out-of-sample
// rows give cross-fitted signals.
inline Eigen::VectorXd evaluate_signals(const NuisanceFit& nf, const Dataset& data,
                                        const EstimatorConfig& cfg) {
  const auto n = data.n();
  const DesignMatrix design = build_design_from_map(data, nf.dr.map);
  const Eigen::VectorXd theta_v = vartheta_vector(nf.intervention, data);
  const DrSampleEval eval = dr_evaluate_design(nf.dr, design);

  DesignMatrix riesz_design_storage;
  const DesignMatrix* riesz_design = &design;
  if (cfg.riesz_separate_basis) {
    riesz_design_storage = build_design_from_map(data, nf.riesz_map);
    riesz_design = &riesz_design_storage;
  }
  const Eigen::VectorXd l_hat = riesz_evaluate_design(nf.riesz, *riesz_design);
  (void)n;
  return assemble_signals(data.y, theta_v, eval, l_hat, nf.q1.q_hat, nf.q2.q_hat,
                          nf.f1.f_hat, nf.f2.f_hat, nf.gamma1, nf.gamma2, nf.index);
}

// Orthogonal score for a single observation at a given theta.
inline double orthogonal_score(double y, double d, const Eigen::VectorXd& x,
                               double theta, const NuisanceFit& nf) {
  const double* xr = x.data();
  const double q1 = nf.q1.q_hat, q2 = nf.q2.q_hat;
  const double inv_gap = 1.0 / (nf.index.tau2 - nf.index.tau1);
  const double th = nf.intervention.vartheta(d, xr, static_cast<int>(x.size()));
  const double idf = IDF_hat(nf.dr, d, x);
  const double if_ = IF_hat(nf.dr, d, x);
  const double l = L_hat(nf.riesz, nf.riesz_map, d, x);
  const double i1 = indicator_integral(y, q1, q2);
  const double ind1 = y <= q1 ? 1.0 : 0.0;
  const double ind2 = y <= q2 ? 1.0 : 0.0;
  return inv_gap * (-th * idf - l * (if_ - i1) -
                    (nf.gamma1 / nf.f1.f_hat) * (ind1 - nf.index.tau1) +
                    (nf.gamma2 / nf.f2.f_hat) * (ind2 - nf.index.tau2)) -
         theta;
}

namespace detail {

inline OcppeResult result_from_signals(const Eigen::VectorXd& w, const IndexU& u,
                                       const std::string& kind) {
  OcppeResult res;
  res.index = u;
  res.n = w.size();
  res.estimator = kind;
  res.theta_hat = w.mean();
  res.scores = w.array() - res.theta_hat;
  res.se_analytic = sd_pop(res.scores) / std::sqrt(static_cast<double>(w.size()));
  res.ci_lo = res.theta_hat - kZ975 * res.se_analytic;
  res.ci_hi = res.theta_hat + kZ975 * res.se_analytic;
  return res;
}

}  // namespace detail

// The DML estimate. theta_hat is the sample mean of the theta-free
// score part (the score is linear in theta, so no iteration is involved).
inline OcppeResult estimate_ocppe(const Dataset& data, const IndexU& u,
                                  const Intervention& g, const EstimatorConfig& cfg = {}) {
  const NuisanceFit nf = fit_nuisances(data, u, g, cfg);
  const Eigen::VectorXd w = evaluate_signals(nf, data, cfg);
  OcppeResult res = detail::result_from_signals(w, u, "dml");
  res.diag = nf.diag;
  return res;
}

// Naive plug-in of the identification formula: no debiasing corrections,
// functionals
// taken from the penalized stage of the distribution regression (this is the
// regularized plug-in whose first-stage bias the orthogonal score removes).
// The reported SE is the spread of the plug-in summand, for table reporting
// only.
inline OcppeResult naive_estimate(const Dataset& data, const IndexU& u,
                                  const Intervention& g, const EstimatorConfig& cfg = {}) {
  data.validate();
  u.validate();
  g.validate_on(data);
  const double center = cfg.center_treatment ? data.d.mean() : 0.0;
  const DesignMatrix design = build_design(data, cfg.basis, center);
  const Eigen::VectorXd theta_v = vartheta_vector(g, data);
  const DRGridFit dr = fit_grid(design, data.y, u.tau1, u.tau2, cfg.dr);
  const DrSampleEval eval = dr_evaluate_design(dr, design, DrStage::Lasso);
  const double inv_gap = 1.0 / (u.tau2 - u.tau1);
  const Eigen::VectorXd w = -inv_gap * (theta_v.array() * eval.idf_hat.array());
  OcppeResult res = detail::result_from_signals(w, u, "naive");
  for (const auto& pt : dr.points) {
    res.diag.dr_support_total += static_cast<Eigen::Index>(pt.support.size());
    if (pt.degenerate) ++res.diag.dr_degenerate_points;
    if (pt.separation_fallback) ++res.diag.dr_separation_fallbacks;
  }
  return res;
}

// Plug-in estimator for a distributional intervention towards target CDF
// G0. Not debiased; flagged as such in the result.
inline OcppeResult dist_perturbation_estimate(const Dataset& data, const IndexU& u,
                                              const TargetCdf& g0,
                                              const EstimatorConfig& cfg = {}) {
  data.validate();
  u.validate();
  g0.validate();
  const auto n = data.n();

  // Empirical CDF with the n/(n+1) convention (ties get averaged ranks).
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return data.d[a] < data.d[b]; });
  Eigen::VectorXd fd(n);
  for (Eigen::Index r = 0; r < n;) {
    Eigen::Index r2 = r;
    while (r2 + 1 < n && data.d[order[static_cast<std::size_t>(r2 + 1)]] ==
                             data.d[order[static_cast<std::size_t>(r)]])
      ++r2;
    const double avg_rank = 0.5 * static_cast<double>(r + r2) + 1.0;
    for (Eigen::Index k = r; k <= r2; ++k)
      fd[order[static_cast<std::size_t>(k)]] = avg_rank / static_cast<double>(n + 1);
    r = r2 + 1;
  }

  Eigen::VectorXd theta_v(n);
  std::vector<Eigen::Index> kept;
  Eigen::Index trimmed = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dens = estimate_density(data.d, data.d[i], cfg.density).f_hat;
    if (dens < 1e-6) {
      ++trimmed;
      theta_v[i] = 0.0;
      continue;
    }
    theta_v[i] = (fd[i] - g0(data.d[i])) / dens;
    kept.push_back(i);
  }
  if (kept.empty()) throw NumericError("dist_perturbation_estimate: all observations trimmed");

  const double center = cfg.center_treatment ? data.d.mean() : 0.0;
  const DesignMatrix design = build_design(data, cfg.basis, center);
  const DRGridFit dr = fit_grid(design, data.y, u.tau1, u.tau2, cfg.dr);
  const DrSampleEval eval = dr_evaluate_design(dr, design);

  const double inv_gap = 1.0 / (u.tau2 - u.tau1);
  Eigen::VectorXd w(static_cast<Eigen::Index>(kept.size()));
  for (std::size_t k = 0; k < kept.size(); ++k)
    w[static_cast<Eigen::Index>(k)] =
        -inv_gap * theta_v[kept[k]] * eval.idf_hat[kept[k]];

  OcppeResult res = detail::result_from_signals(w, u, "dist-perturbation");
  res.n = n;
  res.diag.trimmed = trimmed;
  res.diag.flags.push_back("plug-in only, not debiased");
  if (trimmed > 0) res.diag.flags.push_back("trimmed low-density observations");
  return res;
}

}  // namespace ocppe
