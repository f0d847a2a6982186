#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ocppe/parallel.hpp"
#include "ocppe/rng.hpp"
#include "ocppe/score.hpp"

namespace ocppe {

enum class MultiplierWeights { Normal, Rademacher, Mammen };

struct BootstrapConfig {
  int draws = 2000;
  MultiplierWeights weights = MultiplierWeights::Normal;
};

struct BootstrapEnsemble {
  std::vector<IndexU> grid;
  Eigen::MatrixXd draws;  // B x |grid|, Z*_b(u) = (1/sqrt(n)) sum_i xi_i psi_i(u)
  int b = 0;
  std::uint64_t seed = 0;
};

// Multipliers are shared across u within one replication (one xi vector per
// draw), and each draw b uses the stream (seed, b): draw order cannot affect
// results and any single draw can be reproduced in isolation.
inline BootstrapEnsemble multiplier_bootstrap(const Eigen::MatrixXd& scores_by_u,
                                              std::vector<IndexU> grid, int draws,
                                              std::uint64_t seed,
                                              MultiplierWeights weights =
                                                  MultiplierWeights::Normal) {
  if (draws < 100) throw ConfigError("multiplier_bootstrap: need at least 100 draws");
  const auto n = scores_by_u.rows();
  const auto m = scores_by_u.cols();
  if (grid.size() != static_cast<std::size_t>(m))
    throw ConfigError("multiplier_bootstrap: grid size does not match score columns");

  BootstrapEnsemble ens;
  ens.grid = std::move(grid);
  ens.b = draws;
  ens.seed = seed;
  ens.draws.resize(draws, m);
  const double root_n_inv = 1.0 / std::sqrt(static_cast<double>(n));
  parallel_for(static_cast<std::size_t>(draws), default_threads(), [&](std::size_t b) {
    Rng rng(seed, static_cast<std::uint64_t>(b));
    Eigen::VectorXd xi(n);
    switch (weights) {
      case MultiplierWeights::Normal:
        for (Eigen::Index i = 0; i < n; ++i) xi[i] = rng.normal();
        break;
      case MultiplierWeights::Rademacher:
        for (Eigen::Index i = 0; i < n; ++i) xi[i] = rng.rademacher();
        break;
      case MultiplierWeights::Mammen:
        for (Eigen::Index i = 0; i < n; ++i) xi[i] = rng.mammen();
        break;
    }
    ens.draws.row(static_cast<Eigen::Index>(b)) =
        (xi.transpose() * scores_by_u) * root_n_inv;
  });
  return ens;
}

inline double empirical_quantile_upper(std::vector<double> v, double level) {
  if (v.empty()) throw NumericError("empirical_quantile_upper: empty sample");
  auto k = static_cast<std::ptrdiff_t>(
      std::ceil(level * static_cast<double>(v.size())));
  k = std::clamp<std::ptrdiff_t>(k, 1, static_cast<std::ptrdiff_t>(v.size()));
  std::nth_element(v.begin(), v.begin() + (k - 1), v.end());
  return v[static_cast<std::size_t>(k - 1)];
}

struct UniformBands {
  Eigen::VectorXd se;      // per-u bootstrap SE of theta_hat(u)
  double c_star = 0.0;     // sup-t critical multiple at 95%
  Eigen::VectorXd lo, hi;  // theta_hat(u) -+ c_star * se(u)
};

inline UniformBands bootstrap_se_and_bands(const BootstrapEnsemble& ens,
                                           const Eigen::VectorXd& theta,
                                           Eigen::Index n) {
  const auto m = ens.draws.cols();
  if (theta.size() != m)
    throw ConfigError("bootstrap_se_and_bands: theta length does not match grid");
  UniformBands out;
  out.se.resize(m);
  const double root_n = std::sqrt(static_cast<double>(n));
  for (Eigen::Index u = 0; u < m; ++u)
    out.se[u] = sd_pop(ens.draws.col(u)) / root_n;

  std::vector<double> sup(static_cast<std::size_t>(ens.draws.rows()));
  for (Eigen::Index b = 0; b < ens.draws.rows(); ++b) {
    double s = 0.0;
    for (Eigen::Index u = 0; u < m; ++u) {
      const double denom = root_n * out.se[u];
      if (denom > 0.0) s = std::max(s, std::abs(ens.draws(b, u)) / denom);
    }
    sup[static_cast<std::size_t>(b)] = s;
  }
  out.c_star = empirical_quantile_upper(std::move(sup), 0.95);
  out.lo = theta - out.c_star * out.se;
  out.hi = theta + out.c_star * out.se;
  return out;
}

struct TestReport {
  std::string kind;
  double statistic = 0.0;
  double critical_value_95 = 0.0;
  double p_value = 1.0;
  int b = 0;
  std::vector<IndexU> grid;
  std::vector<double> theta;  // estimates over the grid
  Eigen::MatrixXd draws;      // the multiplier ensemble, B x |grid|
};

namespace detail {

// Finite-B exact-validity convention.
inline double bootstrap_p_value(double statistic, const std::vector<double>& draws) {
  int count = 0;
  for (double d : draws)
    if (d >= statistic) ++count;
  return (1.0 + count) / (static_cast<double>(draws.size()) + 1.0);
}

struct SharedPipeline {
  DesignMatrix design;
  Eigen::VectorXd theta_v;  // for the currently bound intervention
};

// Signals for one index u given shared design/riesz pieces; quantiles,
// densities, the DR grid and the gamma terms are refit per call.
inline Eigen::VectorXd signals_for_pair(const Dataset& data, const DesignMatrix& design,
                                        const Eigen::VectorXd& theta_v,
                                        const RieszFit& riesz, const IndexU& u,
                                        const EstimatorConfig& cfg) {
  const QuantileFit q1 = estimate_quantile(data.y, u.tau1);
  const QuantileFit q2 = estimate_quantile(data.y, u.tau2);
  const DensityFit f1 = estimate_density(data.y, q1.q_hat, cfg.density);
  const DensityFit f2 = estimate_density(data.y, q2.q_hat, cfg.density);
  if (f1.f_hat <= 1e-12 || f2.f_hat <= 1e-12)
    throw NumericError("uniform test: estimated outcome density degenerate at a quantile");
  const DRGridFit dr = fit_grid(design, data.y, u.tau1, u.tau2, cfg.dr);
  const DrSampleEval eval = dr_evaluate_design(dr, design);
  const double gamma1 = (theta_v.array() * eval.df_q1.array()).mean();
  const double gamma2 = (theta_v.array() * eval.df_q2.array()).mean();
  const Eigen::VectorXd l_hat = riesz_evaluate_design(riesz, design);
  return assemble_signals(data.y, theta_v, eval, l_hat, q1.q_hat, q2.q_hat, f1.f_hat,
                          f2.f_hat, gamma1, gamma2, u);
}

}  // namespace detail

// Example 4.1: homogeneity across quantile ranges for a fixed intervention.
// The double integral over {a < t1 < t2 < 1-a} is a renormalized trapezoid
// sum over the step grid; pairs violating the tau2 - tau1 >= 0.01 floor are
// excluded and the weights renormalized. Statistic and bootstrap draws share
// the grid and weights.
inline TestReport test_homogeneity_quantiles(const Dataset& data, const Intervention& g,
                                             double a, double grid_step, int draws,
                                             std::uint64_t seed,
                                             const EstimatorConfig& cfg = {},
                                             MultiplierWeights weights =
                                                 MultiplierWeights::Normal) {
  if (!(a > 0.0 && a < 0.5))
    throw ConfigError("test_homogeneity_quantiles: a must lie in (0, 1/2)");
  if (!(grid_step > 0.0))
    throw ConfigError("test_homogeneity_quantiles: grid_step must be positive");
  data.validate();
  g.validate_on(data);

  std::vector<double> taus;
  for (double t = a; t <= 1.0 - a + 1e-12; t += grid_step) taus.push_back(t);
  const auto w1 = trapezoid_weights(taus.size());

  std::vector<IndexU> grid;
  std::vector<double> wts;
  for (std::size_t i = 0; i < taus.size(); ++i)
    for (std::size_t j = i + 1; j < taus.size(); ++j) {
      if (taus[j] - taus[i] < kMinTauGap - 1e-12) continue;
      grid.emplace_back(taus[i], taus[j]);
      wts.push_back(w1[i] * w1[j]);
    }
  if (grid.size() < 3)
    throw ConfigError("test_homogeneity_quantiles: grid too coarse (< 3 pairs)");
  const double wsum = std::accumulate(wts.begin(), wts.end(), 0.0);
  for (auto& w : wts) w /= wsum;

  const double center = cfg.center_treatment ? data.d.mean() : 0.0;
  const DesignMatrix design = build_design(data, cfg.basis, center);
  const Eigen::VectorXd theta_v = vartheta_vector(g, data);
  const RieszMoments mom = build_moments(design, theta_v);
  const double lambda_gamma =
      cfg.lambda_gamma_override > 0.0
          ? cfg.lambda_gamma_override
          : penalty_level_gamma(data.n(), design.p(), cfg.riesz_a);
  const RieszFit riesz = lasso_md_fit(mom, lambda_gamma, cfg.riesz);

  const auto m = static_cast<Eigen::Index>(grid.size());
  Eigen::MatrixXd scores(data.n(), m);
  Eigen::VectorXd theta(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::VectorXd w =
        detail::signals_for_pair(data, design, theta_v, riesz, grid[static_cast<std::size_t>(k)], cfg);
    theta[k] = w.mean();
    scores.col(k) = w.array() - theta[k];
  }

  const double root_n = std::sqrt(static_cast<double>(data.n()));
  double avg = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) avg += wts[static_cast<std::size_t>(k)] * theta[k];
  double stat = 0.0;
  for (Eigen::Index k = 0; k < m; ++k)
    stat = std::max(stat, root_n * std::abs(theta[k] - avg));

  const BootstrapEnsemble ens = multiplier_bootstrap(scores, grid, draws, seed, weights);
  std::vector<double> boot(static_cast<std::size_t>(draws));
  for (int b = 0; b < draws; ++b) {
    double zavg = 0.0;
    for (Eigen::Index k = 0; k < m; ++k)
      zavg += wts[static_cast<std::size_t>(k)] * ens.draws(b, k);
    double s = 0.0;
    for (Eigen::Index k = 0; k < m; ++k)
      s = std::max(s, std::abs(ens.draws(b, k) - zavg));
    boot[static_cast<std::size_t>(b)] = s;
  }

  TestReport rep;
  rep.kind = "homogeneity-quantiles";
  rep.statistic = stat;
  rep.critical_value_95 = empirical_quantile_upper(boot, 0.95);
  rep.p_value = detail::bootstrap_p_value(stat, boot);
  rep.b = draws;
  rep.grid = grid;
  rep.theta.assign(theta.data(), theta.data() + theta.size());
  rep.draws = ens.draws;
  return rep;
}

namespace detail {

// Shared machinery of the sigma-indexed tests: one DR grid (F does not depend
// on sigma), one Riesz fit per sigma warm-started along the grid.
struct SigmaSweep {
  std::vector<IndexU> grid;
  Eigen::MatrixXd scores;
  Eigen::VectorXd theta;
};

inline SigmaSweep sweep_sigma(const Dataset& data, const Intervention& family,
                              const IndexU& u, const std::vector<double>& sigma_grid,
                              const EstimatorConfig& cfg) {
  const double center = cfg.center_treatment ? data.d.mean() : 0.0;
  const DesignMatrix design = build_design(data, cfg.basis, center);

  const QuantileFit q1 = estimate_quantile(data.y, u.tau1);
  const QuantileFit q2 = estimate_quantile(data.y, u.tau2);
  const DensityFit f1 = estimate_density(data.y, q1.q_hat, cfg.density);
  const DensityFit f2 = estimate_density(data.y, q2.q_hat, cfg.density);
  if (f1.f_hat <= 1e-12 || f2.f_hat <= 1e-12)
    throw NumericError("uniform test: estimated outcome density degenerate at a quantile");
  const DRGridFit dr = fit_grid(design, data.y, u.tau1, u.tau2, cfg.dr);
  const DrSampleEval eval = dr_evaluate_design(dr, design);

  SigmaSweep out;
  const auto m = static_cast<Eigen::Index>(sigma_grid.size());
  out.scores.resize(data.n(), m);
  out.theta.resize(m);
  RieszFit warm;
  bool have_warm = false;
  for (Eigen::Index k = 0; k < m; ++k) {
    const Intervention gk = family.with_sigma({sigma_grid[static_cast<std::size_t>(k)]});
    gk.validate_on(data);
    const Eigen::VectorXd theta_v = vartheta_vector(gk, data);
    const RieszMoments mom = build_moments(design, theta_v);
    const double lambda_gamma =
        cfg.lambda_gamma_override > 0.0
            ? cfg.lambda_gamma_override
            : penalty_level_gamma(data.n(), design.p(), cfg.riesz_a);
    const RieszFit riesz =
        lasso_md_fit(mom, lambda_gamma, cfg.riesz, have_warm ? &warm : nullptr);
    warm = riesz;
    have_warm = true;

    const double gamma1 = (theta_v.array() * eval.df_q1.array()).mean();
    const double gamma2 = (theta_v.array() * eval.df_q2.array()).mean();
    const Eigen::VectorXd l_hat = riesz_evaluate_design(riesz, design);
    IndexU uk(u.tau1, u.tau2, {sigma_grid[static_cast<std::size_t>(k)]});
    const Eigen::VectorXd w =
        assemble_signals(data.y, theta_v, eval, l_hat, q1.q_hat, q2.q_hat, f1.f_hat,
                         f2.f_hat, gamma1, gamma2, uk);
    out.theta[k] = w.mean();
    out.scores.col(k) = w.array() - out.theta[k];
    out.grid.push_back(uk);
  }
  return out;
}

}  // namespace detail

// Example 4.2: homogeneity across an intervention family at a fixed quantile
// range. The 1/#S average is a normalized trapezoid mean over the sigma grid.
inline TestReport test_homogeneity_interventions(const Dataset& data,
                                                 const Intervention& family,
                                                 const IndexU& u,
                                                 const std::vector<double>& sigma_grid,
                                                 int draws, std::uint64_t seed,
                                                 const EstimatorConfig& cfg = {},
                                                 MultiplierWeights weights =
                                                     MultiplierWeights::Normal) {
  if (sigma_grid.size() < 2)
    throw ConfigError("test_homogeneity_interventions: sigma grid must have >= 2 points");
  data.validate();
  const detail::SigmaSweep sweep = detail::sweep_sigma(data, family, u, sigma_grid, cfg);

  auto wts = trapezoid_weights(sigma_grid.size());
  const double wsum = std::accumulate(wts.begin(), wts.end(), 0.0);
  for (auto& w : wts) w /= wsum;

  const auto m = sweep.theta.size();
  const double root_n = std::sqrt(static_cast<double>(data.n()));
  double avg = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) avg += wts[static_cast<std::size_t>(k)] * sweep.theta[k];
  double stat = 0.0;
  for (Eigen::Index k = 0; k < m; ++k)
    stat = std::max(stat, root_n * std::abs(sweep.theta[k] - avg));

  const BootstrapEnsemble ens = multiplier_bootstrap(sweep.scores, sweep.grid, draws, seed, weights);
  std::vector<double> boot(static_cast<std::size_t>(draws));
  for (int b = 0; b < draws; ++b) {
    double zavg = 0.0;
    for (Eigen::Index k = 0; k < m; ++k)
      zavg += wts[static_cast<std::size_t>(k)] * ens.draws(b, k);
    double s = 0.0;
    for (Eigen::Index k = 0; k < m; ++k)
      s = std::max(s, std::abs(ens.draws(b, k) - zavg));
    boot[static_cast<std::size_t>(b)] = s;
  }

  TestReport rep;
  rep.kind = "homogeneity-interventions";
  rep.statistic = stat;
  rep.critical_value_95 = empirical_quantile_upper(boot, 0.95);
  rep.p_value = detail::bootstrap_p_value(stat, boot);
  rep.b = draws;
  rep.grid = sweep.grid;
  rep.theta.assign(sweep.theta.data(), sweep.theta.data() + sweep.theta.size());
  rep.draws = ens.draws;
  return rep;
}

// Example 4.3: one-sided optimality of sigma_star within the family.
// statistic = 0 yields p-value 1 by construction.
inline TestReport test_optimality(const Dataset& data, const Intervention& family,
                                  const IndexU& u, double sigma_star,
                                  std::vector<double> sigma_grid, int draws,
                                  std::uint64_t seed, const EstimatorConfig& cfg = {},
                                  MultiplierWeights weights = MultiplierWeights::Normal) {
  if (sigma_grid.empty()) throw ConfigError("test_optimality: empty sigma grid");
  data.validate();

  std::ptrdiff_t star_idx = -1;
  for (std::size_t k = 0; k < sigma_grid.size(); ++k)
    if (std::abs(sigma_grid[k] - sigma_star) <= 1e-12) star_idx = static_cast<std::ptrdiff_t>(k);
  if (star_idx < 0) {
    sigma_grid.push_back(sigma_star);
    std::sort(sigma_grid.begin(), sigma_grid.end());
    for (std::size_t k = 0; k < sigma_grid.size(); ++k)
      if (std::abs(sigma_grid[k] - sigma_star) <= 1e-12) star_idx = static_cast<std::ptrdiff_t>(k);
  }

  const detail::SigmaSweep sweep = detail::sweep_sigma(data, family, u, sigma_grid, cfg);
  const auto m = sweep.theta.size();
  const double root_n = std::sqrt(static_cast<double>(data.n()));
  const double theta_star = sweep.theta[star_idx];
  double stat = 0.0;
  for (Eigen::Index k = 0; k < m; ++k)
    stat = std::max(stat, root_n * std::max(sweep.theta[k] - theta_star, 0.0));

  const BootstrapEnsemble ens = multiplier_bootstrap(sweep.scores, sweep.grid, draws, seed, weights);
  std::vector<double> boot(static_cast<std::size_t>(draws));
  for (int b = 0; b < draws; ++b) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < m; ++k)
      s = std::max(s, std::max(ens.draws(b, k) - ens.draws(b, star_idx), 0.0));
    boot[static_cast<std::size_t>(b)] = s;
  }

  TestReport rep;
  rep.kind = "optimality";
  rep.statistic = stat;
  rep.critical_value_95 = empirical_quantile_upper(boot, 0.95);
  rep.p_value = stat == 0.0 ? 1.0 : detail::bootstrap_p_value(stat, boot);
  rep.b = draws;
  rep.grid = sweep.grid;
  rep.theta.assign(sweep.theta.data(), sweep.theta.data() + sweep.theta.size());
  rep.draws = ens.draws;
  return rep;
}

}  // namespace ocppe
