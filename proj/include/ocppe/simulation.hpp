#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "ocppe/parallel.hpp"
#include "ocppe/rng.hpp"
#include "ocppe/score.hpp"

namespace ocppe {

// Simulation design: Y = D + X'(c_y delta0) + D*X1 + U, D = X'(c_d delta0) + V,
// U, V ~ N(0,1), X ~ N(0, Sigma) with Sigma_kj = 0.5^|j-k|, delta0_j = 1/j^2.
struct DgpConfig {
  Eigen::Index n = 500;
  int p_x = 30;
  double r_d2 = 0.2;
  double r_y2 = 0.2;
  std::uint64_t seed = 0;
  bool interaction = true;  // include the D*X1 term (off for null designs)

  void validate() const {
    if (n < 2 || p_x < 1) throw ConfigError("DgpConfig: need n >= 2, p_x >= 1");
    if (!(r_d2 > 0.0 && r_d2 < 1.0) || !(r_y2 >= 0.0 && r_y2 < 1.0))
      throw ConfigError("DgpConfig: R^2 parameters must lie in (0,1)");
  }
};

struct DgpParams {
  Eigen::VectorXd delta0;
  Eigen::MatrixXd sigma_chol;  // lower Cholesky factor of the Toeplitz Sigma
  double c_d = 0.0;
  double c_y = 0.0;
  Eigen::VectorXd coef_d;  // c_d * delta0
  Eigen::VectorXd coef_y;  // c_y * delta0
};

inline DgpParams dgp_params(const DgpConfig& cfg) {
  cfg.validate();
  const int p = cfg.p_x;
  DgpParams par;
  par.delta0.resize(p);
  for (int j = 0; j < p; ++j) par.delta0[j] = 1.0 / ((j + 1.0) * (j + 1.0));
  Eigen::MatrixXd sigma(p, p);
  for (int a = 0; a < p; ++a)
    for (int b = 0; b < p; ++b) sigma(a, b) = std::pow(0.5, std::abs(a - b));
  const double quad = par.delta0.dot(sigma * par.delta0);
  constexpr double pi2_3 = 3.2898681336964529;  // pi^2 / 3
  par.c_d = std::sqrt(pi2_3 * cfg.r_d2 / ((1.0 - cfg.r_d2) * quad));
  par.c_y = std::sqrt(cfg.r_y2 / ((1.0 - cfg.r_y2) * quad));
  par.sigma_chol = Eigen::LLT<Eigen::MatrixXd>(sigma).matrixL();
  par.coef_d = par.c_d * par.delta0;
  par.coef_y = par.c_y * par.delta0;
  return par;
}

inline Dataset dgp_sample(const DgpConfig& cfg, const DgpParams& par,
                          std::uint64_t stream_id = 0) {
  Dataset data;
  data.y.resize(cfg.n);
  data.d.resize(cfg.n);
  data.x.resize(cfg.n, cfg.p_x);
  Rng rng(cfg.seed, stream_id);
  Eigen::VectorXd eps(cfg.p_x), x(cfg.p_x);
  for (Eigen::Index i = 0; i < cfg.n; ++i) {
    for (int j = 0; j < cfg.p_x; ++j) eps[j] = rng.normal();
    x.noalias() = par.sigma_chol * eps;
    const double v = rng.normal();
    const double u = rng.normal();
    const double d = x.dot(par.coef_d) + v;
    const double inter = cfg.interaction ? d * x[0] : 0.0;
    data.x.row(i) = x;
    data.d[i] = d;
    data.y[i] = d + x.dot(par.coef_y) + inter + u;
  }
  return data;
}

inline Dataset dgp_sample(const DgpConfig& cfg, std::uint64_t stream_id = 0) {
  return dgp_sample(cfg, dgp_params(cfg), stream_id);
}

struct TrueTheta {
  double theta = 0.0;
  double mc_se = 0.0;
  double q1 = 0.0, q2 = 0.0;  // oracle outcome quantiles from the mega-sample
  Eigen::Index mc_size = 0;
  Eigen::Index in_range = 0;
};

// theta = E[vartheta(D,X) * dm/dD | Y in (Q(tau1), Q(tau2))] with
// dm/dD = 1 + X1 (or 1 without the interaction), by a mega-sample oracle.
inline TrueTheta true_theta(const IndexU& u, const DgpConfig& cfg,
                            const Intervention& g, Eigen::Index mc_size = 1000000,
                            std::uint64_t oracle_seed = 0x6f7261636c65ULL) {
  const DgpParams par = dgp_params(cfg);
  DgpConfig mc_cfg = cfg;
  mc_cfg.n = mc_size;
  mc_cfg.seed = oracle_seed;
  const Dataset mega = dgp_sample(mc_cfg, par, 0);

  TrueTheta out;
  out.mc_size = mc_size;
  out.q1 = estimate_quantile(mega.y, u.tau1).q_hat;
  out.q2 = estimate_quantile(mega.y, u.tau2).q_hat;

  double sum = 0.0, sum2 = 0.0;
  Eigen::Index count = 0;
  Eigen::VectorXd xrow;
  for (Eigen::Index i = 0; i < mega.n(); ++i) {
    if (!(mega.y[i] > out.q1 && mega.y[i] < out.q2)) continue;
    xrow = mega.x.row(i);
    const double th = g.vartheta(mega.d[i], xrow.data(), cfg.p_x);
    const double dm = 1.0 + (cfg.interaction ? mega.x(i, 0) : 0.0);
    const double val = th * dm;
    sum += val;
    sum2 += val * val;
    ++count;
  }
  if (count < 2) throw NumericError("true_theta: no oracle draws fell in the range");
  out.in_range = count;
  out.theta = sum / static_cast<double>(count);
  const double var = sum2 / static_cast<double>(count) - out.theta * out.theta;
  out.mc_se = std::sqrt(std::max(var, 0.0) / static_cast<double>(count));
  return out;
}

struct StudyConfig {
  Eigen::Index n = 500;
  int p_x = 30;
  std::vector<std::pair<double, double>> designs;  // (R_d^2, R_y^2)
  std::vector<std::pair<double, double>> ranges;   // (tau1, tau2)
  int reps = 100;
  std::uint64_t master_seed = 1;
  Eigen::Index oracle_draws = 1000000;
  bool run_naive = true;
  bool run_dml = true;
  bool bias_ratio_of_means = true;  // (mean(theta_hat)-theta)/theta; flag flips to mean of ratios
  int threads = 0;                  // 0: default_threads()
  EstimatorConfig estimator;
  Intervention intervention = Intervention::simulation_location_scale();

  void validate() const {
    if (designs.empty() || ranges.empty()) throw ConfigError("StudyConfig: empty grid");
    if (reps < 0) throw ConfigError("StudyConfig: reps must be nonnegative");
  }
};

struct StudyCell {
  double r_d2 = 0.0, r_y2 = 0.0;
  double tau1 = 0.0, tau2 = 0.0;
  std::string estimator;
  double theta_true = 0.0;
  double bias_ratio = 0.0;
  double std_dev = 0.0;  // across-replication sd of theta_hat (population)
  double mse = 0.0;
  double coverage = 0.0;
  int reps = 0;
  int failures = 0;
  bool flagged = false;  // > 2% replication failures
};

struct StudyReport {
  std::vector<StudyCell> cells;
};

namespace detail {

struct RepOutcome {
  bool ok = false;
  std::string error;
  // per range: naive and dml (theta, lo, hi)
  std::vector<std::array<double, 6>> by_range;
};

}  // namespace detail

// Replication Monte Carlo study. Replication r of every design uses the
// data stream (master_seed, r); the per-cell reductions run after the join in
// a fixed order, so reruns are bit-identical for a given seed and thread
// count has no effect on results.
inline StudyReport run_study(const StudyConfig& cfg) {
  cfg.validate();
  const int threads = cfg.threads > 0 ? cfg.threads : default_threads();

  StudyReport report;
  for (const auto& [r_d2, r_y2] : cfg.designs) {
    DgpConfig dgp;
    dgp.n = cfg.n;
    dgp.p_x = cfg.p_x;
    dgp.r_d2 = r_d2;
    dgp.r_y2 = r_y2;
    dgp.seed = cfg.master_seed;
    const DgpParams par = dgp_params(dgp);

    std::vector<TrueTheta> truth;
    for (const auto& [t1, t2] : cfg.ranges)
      truth.push_back(true_theta(IndexU(t1, t2), dgp, cfg.intervention, cfg.oracle_draws));

    std::vector<detail::RepOutcome> outcomes(static_cast<std::size_t>(cfg.reps));
    parallel_for(static_cast<std::size_t>(cfg.reps), threads, [&](std::size_t r) {
      auto& out = outcomes[r];
      out.by_range.resize(cfg.ranges.size());
      try {
        const Dataset data = dgp_sample(dgp, par, static_cast<std::uint64_t>(r));
        const double center =
            cfg.estimator.center_treatment ? data.d.mean() : 0.0;
        const DesignMatrix design = build_design(data, cfg.estimator.basis, center);
        const Eigen::VectorXd theta_v = vartheta_vector(cfg.intervention, data);

        RieszFit riesz;
        if (cfg.run_dml) {
          const RieszMoments mom = build_moments(design, theta_v);
          const double lambda_gamma =
              cfg.estimator.lambda_gamma_override > 0.0
                  ? cfg.estimator.lambda_gamma_override
                  : penalty_level_gamma(data.n(), design.p(), cfg.estimator.riesz_a);
          riesz = lasso_md_fit(mom, lambda_gamma, cfg.estimator.riesz);
        }

        for (std::size_t ri = 0; ri < cfg.ranges.size(); ++ri) {
          const IndexU u(cfg.ranges[ri].first, cfg.ranges[ri].second);
          const QuantileFit q1 = estimate_quantile(data.y, u.tau1);
          const QuantileFit q2 = estimate_quantile(data.y, u.tau2);
          const DensityFit f1 = estimate_density(data.y, q1.q_hat, cfg.estimator.density);
          const DensityFit f2 = estimate_density(data.y, q2.q_hat, cfg.estimator.density);
          if (f1.f_hat <= 1e-12 || f2.f_hat <= 1e-12)
            throw NumericError("degenerate outcome density at a quantile");
          const DRGridFit dr = fit_grid(design, data.y, u.tau1, u.tau2, cfg.estimator.dr);
          const DrSampleEval eval = dr_evaluate_design(dr, design);
          const double inv_gap = 1.0 / (u.tau2 - u.tau1);

          auto& slot = out.by_range[ri];
          {
            const DrSampleEval eval_lasso =
                dr_evaluate_design(dr, design, DrStage::Lasso);
            const Eigen::VectorXd w_naive =
                -inv_gap * (theta_v.array() * eval_lasso.idf_hat.array());
            const double th = w_naive.mean();
            const double se = sd_pop(Eigen::VectorXd(w_naive.array() - th)) /
                              std::sqrt(static_cast<double>(data.n()));
            slot[0] = th;
            slot[1] = th - kZ975 * se;
            slot[2] = th + kZ975 * se;
          }
          if (cfg.run_dml) {
            const double gamma1 = (theta_v.array() * eval.df_q1.array()).mean();
            const double gamma2 = (theta_v.array() * eval.df_q2.array()).mean();
            const Eigen::VectorXd l_hat = riesz_evaluate_design(riesz, design);
            const Eigen::VectorXd w =
                assemble_signals(data.y, theta_v, eval, l_hat, q1.q_hat, q2.q_hat,
                                 f1.f_hat, f2.f_hat, gamma1, gamma2, u);
            const double th = w.mean();
            const double se = sd_pop(Eigen::VectorXd(w.array() - th)) /
                              std::sqrt(static_cast<double>(data.n()));
            slot[3] = th;
            slot[4] = th - kZ975 * se;
            slot[5] = th + kZ975 * se;
          }
        }
        out.ok = true;
      } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
      }
    });

    for (std::size_t ri = 0; ri < cfg.ranges.size(); ++ri) {
      for (const bool dml : {false, true}) {
        if (dml && !cfg.run_dml) continue;
        if (!dml && !cfg.run_naive) continue;
        StudyCell cell;
        cell.r_d2 = r_d2;
        cell.r_y2 = r_y2;
        cell.tau1 = cfg.ranges[ri].first;
        cell.tau2 = cfg.ranges[ri].second;
        cell.estimator = dml ? "dml" : "naive";
        cell.theta_true = truth[ri].theta;

        std::vector<double> thetas;
        int covered = 0, failures = 0;
        std::vector<double> ratios;
        for (const auto& out : outcomes) {
          if (!out.ok) {
            ++failures;
            continue;
          }
          const auto& slot = out.by_range[ri];
          const double th = slot[dml ? 3 : 0];
          const double lo = slot[dml ? 4 : 1];
          const double hi = slot[dml ? 5 : 2];
          thetas.push_back(th);
          ratios.push_back((th - cell.theta_true) / cell.theta_true);
          if (cell.theta_true >= lo && cell.theta_true <= hi) ++covered;
        }
        cell.reps = static_cast<int>(thetas.size());
        cell.failures = failures;
        cell.flagged = cfg.reps > 0 &&
                       failures > 0.02 * static_cast<double>(cfg.reps);
        if (!thetas.empty()) {
          Eigen::Map<const Eigen::VectorXd> tv(thetas.data(),
                                               static_cast<Eigen::Index>(thetas.size()));
          const double m = tv.mean();
          cell.std_dev = sd_pop(tv);
          cell.mse = (tv.array() - cell.theta_true).square().mean();
          cell.coverage = static_cast<double>(covered) / static_cast<double>(thetas.size());
          if (cfg.bias_ratio_of_means) {
            cell.bias_ratio = (m - cell.theta_true) / cell.theta_true;
          } else {
            Eigen::Map<const Eigen::VectorXd> rv(ratios.data(),
                                                 static_cast<Eigen::Index>(ratios.size()));
            cell.bias_ratio = rv.mean();
          }
        }
        report.cells.push_back(std::move(cell));
      }
    }
  }
  return report;
}

}  // namespace ocppe
