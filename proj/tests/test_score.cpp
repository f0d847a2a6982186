#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "ocppe/rng.hpp"
#include "ocppe/score.hpp"
#include "ocppe/simulation.hpp"

using namespace ocppe;

namespace {

Dataset small_dgp(Eigen::Index n, std::uint64_t seed, int px = 5) {
  DgpConfig cfg;
  cfg.n = n;
  cfg.p_x = px;
  cfg.r_d2 = 0.2;
  cfg.r_y2 = 0.2;
  cfg.seed = seed;
  return dgp_sample(cfg);
}

EstimatorConfig fast_config() {
  EstimatorConfig cfg;
  cfg.basis = BasisSpec{2, true, false};
  cfg.dr.grid_points = 8;
  return cfg;
}

}  // namespace

TEST_CASE("indicator integral geometry") {
  const double q1 = 1.0, q2 = 3.0;
  CHECK(indicator_integral(0.5, q1, q2) == 2.0);   // below q1: full interval
  CHECK(indicator_integral(4.0, q1, q2) == 0.0);   // above q2: zero
  CHECK(indicator_integral(2.0, q1, q2) == 1.0);   // inside: q2 - y
  CHECK(indicator_integral(1.0, q1, q2) == 2.0);
  CHECK(indicator_integral(3.0, q1, q2) == 0.0);
}

TEST_CASE("scores have exactly zero mean at theta_hat") {
  const auto data = small_dgp(300, 21);
  const auto res = estimate_ocppe(data, IndexU(0.25, 0.75),
                                  Intervention::location_shift(), fast_config());
  CHECK(std::abs(res.scores.mean()) <= 1e-10);
  CHECK(res.n == 300);
  CHECK(res.estimator == "dml");
}

TEST_CASE("analytic SE equals sd(scores)/sqrt(n), recomputed independently") {
  const auto data = small_dgp(250, 22);
  const auto res = estimate_ocppe(data, IndexU(0.3, 0.7),
                                  Intervention::location_shift(), fast_config());
  double ss = 0.0;
  for (Eigen::Index i = 0; i < res.scores.size(); ++i) ss += res.scores[i] * res.scores[i];
  const double se = std::sqrt(ss / static_cast<double>(res.scores.size())) /
                    std::sqrt(static_cast<double>(res.scores.size()));
  CHECK(res.se_analytic == doctest::Approx(se).epsilon(1e-12));
  CHECK(res.ci_lo == doctest::Approx(res.theta_hat - 1.959963984540054 * se));
  CHECK(res.ci_hi == doctest::Approx(res.theta_hat + 1.959963984540054 * se));
}

TEST_CASE("per-observation orthogonal score matches the vectorized path") {
  const auto data = small_dgp(200, 23);
  const auto cfg = fast_config();
  const IndexU u(0.3, 0.7);
  const auto g = Intervention::simulation_location_scale();
  const NuisanceFit nf = fit_nuisances(data, u, g, cfg);
  const Eigen::VectorXd w = evaluate_signals(nf, data, cfg);
  const double theta = w.mean();
  for (Eigen::Index i = 0; i < 20; ++i) {
    Eigen::VectorXd x = data.x.row(i);
    const double psi = orthogonal_score(data.y[i], data.d[i], x, theta, nf);
    CHECK(psi == doctest::Approx(w[i] - theta).epsilon(1e-9));
  }
}

TEST_CASE("removing the correction terms reproduces the naive estimate exactly") {
  // Term deletion on the same fitted stage as the naive plug-in (the
  // penalized stage): the DML score minus its three corrections is the naive
  // summand.
  const auto data = small_dgp(300, 24);
  const auto cfg = fast_config();
  const IndexU u(0.25, 0.75);
  const auto g = Intervention::simulation_location_scale();

  const NuisanceFit nf = fit_nuisances(data, u, g, cfg);
  const DesignMatrix design = build_design_from_map(data, nf.dr.map);
  const Eigen::VectorXd theta_v = vartheta_vector(g, data);
  const DrSampleEval eval = dr_evaluate_design(nf.dr, design, DrStage::Lasso);
  const Eigen::VectorXd zero_l = Eigen::VectorXd::Zero(data.n());
  // corrections disabled: L = 0 and gamma terms = 0
  const Eigen::VectorXd w_stripped =
      assemble_signals(data.y, theta_v, eval, zero_l, nf.q1.q_hat, nf.q2.q_hat,
                       nf.f1.f_hat, nf.f2.f_hat, 0.0, 0.0, u);

  const auto naive = naive_estimate(data, u, g, cfg);
  CHECK(naive.theta_hat == doctest::Approx(w_stripped.mean()).epsilon(1e-12));
}

TEST_CASE("location shift reduces to a hardcoded unit-direction path bit for bit") {
  const auto data = small_dgp(250, 25);
  const auto cfg = fast_config();
  const IndexU u(0.3, 0.7);

  const auto res = estimate_ocppe(data, u, Intervention::location_shift(), cfg);

  // Hand-rolled location-shift assembly: vartheta is literally 1.0, so every
  // product in the score is unchanged; the result must be identical doubles.
  const NuisanceFit nf =
      fit_nuisances(data, u, Intervention::location_shift(), cfg);
  const DesignMatrix design = build_design_from_map(data, nf.dr.map);
  const DrSampleEval eval = dr_evaluate_design(nf.dr, design);
  const Eigen::VectorXd l_hat = riesz_evaluate_design(nf.riesz, design);
  const double inv_gap = 1.0 / (u.tau2 - u.tau1);
  const double g1f = nf.gamma1 / nf.f1.f_hat;
  const double g2f = nf.gamma2 / nf.f2.f_hat;
  Eigen::VectorXd w_manual(data.n());
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const double i1 = indicator_integral(data.y[i], nf.q1.q_hat, nf.q2.q_hat);
    const double ind1 = data.y[i] <= nf.q1.q_hat ? 1.0 : 0.0;
    const double ind2 = data.y[i] <= nf.q2.q_hat ? 1.0 : 0.0;
    w_manual[i] = inv_gap *
                  (-1.0 * eval.idf_hat[i] - l_hat[i] * (eval.if_hat[i] - i1) -
                   g1f * (ind1 - u.tau1) + g2f * (ind2 - u.tau2));
  }
  const double theta_manual = w_manual.mean();
  CHECK(res.theta_hat == theta_manual);  // bit-for-bit
}

TEST_CASE("a fitted CDF that is flat in d gives a zero naive estimate") {
  // zero coefficients at every grid level: DF = 0 pointwise, so IDF = 0 and
  // the plug-in sum vanishes identically
  DRGridFit fit;
  fit.link = LinkKind::Logistic;
  fit.q1 = -1.0;
  fit.q2 = 1.0;
  fit.dy = 0.5;
  fit.tau1 = 0.3;
  fit.tau2 = 0.7;
  BasisSpec spec{1, true, false};
  fit.map.spec = spec;
  fit.map.px = 2;
  fit.map.terms = basis_terms(spec, 2);
  fit.map.kept = {0, 1, 2};
  for (int j = 0; j <= 4; ++j) {
    DrPointFit pt;
    pt.y = fit.q1 + j * fit.dy;
    pt.intercept = 0.3;  // flat but nonzero level
    fit.points.push_back(pt);
  }
  const auto data = small_dgp(50, 99, 2);
  const DesignMatrix design = build_design_from_map(data, fit.map);
  const DrSampleEval eval = dr_evaluate_design(fit, design, DrStage::Lasso);
  CHECK(eval.idf_hat.cwiseAbs().maxCoeff() == 0.0);
  const Eigen::VectorXd theta_v = Eigen::VectorXd::Ones(data.n());
  const double inv_gap = 1.0 / (fit.tau2 - fit.tau1);
  const Eigen::VectorXd w = -inv_gap * (theta_v.array() * eval.idf_hat.array());
  CHECK(w.mean() == 0.0);
}

TEST_CASE("a separate riesz basis round-trips through held-out evaluation") {
  const auto data = small_dgp(250, 98);
  EstimatorConfig cfg = fast_config();
  cfg.riesz_separate_basis = true;
  cfg.riesz_basis = BasisSpec{1, true, false};  // coarser dictionary for L
  const IndexU u(0.3, 0.7);
  const auto g = Intervention::location_shift();
  const NuisanceFit nf = fit_nuisances(data, u, g, cfg);
  CHECK(nf.riesz_map.dim() == basis_dimension(cfg.riesz_basis, 5));
  const Eigen::VectorXd w_in = evaluate_signals(nf, data, cfg);
  CHECK(std::abs(w_in.mean()) < 1e6);  // finite, well-formed
  const auto held = small_dgp(100, 97);
  const Eigen::VectorXd w_out = evaluate_signals(nf, held, cfg);
  CHECK(w_out.allFinite());
}

TEST_CASE("pure-noise outcome gives a theta within three SEs of zero") {
  Rng rng(26);
  Dataset data;
  const int n = 800;
  data.y.resize(n);
  data.d.resize(n);
  data.x.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    data.y[i] = rng.normal();
    data.d[i] = rng.normal();
    for (int j = 0; j < 3; ++j) data.x(i, j) = rng.normal();
  }
  const auto res = estimate_ocppe(data, IndexU(0.25, 0.75),
                                  Intervention::location_shift(), fast_config());
  CHECK(std::abs(res.theta_hat) <= 3.0 * res.se_analytic);
}

TEST_CASE("centered-treatment pipeline is invariant to shifting D for a location shift") {
  const auto data = small_dgp(300, 27);
  EstimatorConfig cfg = fast_config();
  cfg.center_treatment = true;
  const IndexU u(0.3, 0.7);

  Dataset shifted = data;
  shifted.d.array() += 37.5;

  const auto res1 = estimate_ocppe(data, u, Intervention::location_shift(), cfg);
  const auto res2 = estimate_ocppe(shifted, u, Intervention::location_shift(), cfg);
  CHECK(std::abs(res1.theta_hat - res2.theta_hat) < 1e-6);
}

TEST_CASE("degenerate density raises a numeric error") {
  Dataset data;
  data.y.resize(40);
  data.d.resize(40);
  data.x.resize(40, 1);
  Rng rng(28);
  for (int i = 0; i < 40; ++i) {
    data.y[i] = static_cast<double>(i);
    data.d[i] = rng.normal();
    data.x(i, 0) = rng.normal();
  }
  EstimatorConfig cfg = fast_config();
  // An absurdly wide bandwidth spreads all mass out: f_hat ~ K(0)/h < 1e-12.
  cfg.density.bandwidth_override = 1e15;
  CHECK_THROWS_AS(
      estimate_ocppe(data, IndexU(0.3, 0.7), Intervention::location_shift(), cfg),
      NumericError);
}

TEST_CASE("distributional perturbation estimator") {
  const auto data = small_dgp(400, 29);
  const auto cfg = fast_config();
  const IndexU u(0.25, 0.75);

  SUBCASE("no-op target G0 = empirical CDF gives exactly zero") {
    // Build the table CDF through the same rank/(n+1) convention.
    std::vector<std::pair<double, double>> table;
    std::vector<double> ds(data.d.data(), data.d.data() + data.n());
    std::sort(ds.begin(), ds.end());
    for (std::size_t r = 0; r < ds.size(); ++r)
      table.emplace_back(ds[r], (static_cast<double>(r) + 1.0) /
                                    (static_cast<double>(ds.size()) + 1.0));
    // widen to reach 0 and 1 so the table is a valid CDF
    table.insert(table.begin(), {ds.front() - 1.0, 0.0});
    table.emplace_back(ds.back() + 1.0, 1.0);
    TargetCdf g0;
    g0.family = TargetCdf::Family::Table;
    g0.table = table;
    const auto res = dist_perturbation_estimate(data, u, g0, cfg);
    CHECK(res.theta_hat == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(res.estimator == "dist-perturbation");
    bool flagged = false;
    for (const auto& f : res.diag.flags)
      if (f.find("plug-in") != std::string::npos) flagged = true;
    CHECK(flagged);
  }

  SUBCASE("mean-shift target agrees in sign with the location-shift OCPPE") {
    const auto big = small_dgp(2000, 30);
    const double mu = big.d.mean();
    const double sd = sd_pop(big.d);
    TargetCdf g0;
    g0.family = TargetCdf::Family::Normal;
    g0.mean = mu + 1.0;  // target shifts D upward
    g0.sd = sd;
    const auto dist = dist_perturbation_estimate(big, u, g0, cfg);
    const auto shift = estimate_ocppe(big, u, Intervention::location_shift(), cfg);
    CHECK(dist.theta_hat * shift.theta_hat > 0.0);
  }

  SUBCASE("degenerate target rejected") {
    TargetCdf g0;
    g0.family = TargetCdf::Family::Normal;
    g0.sd = 0.0;
    CHECK_THROWS_AS(dist_perturbation_estimate(data, u, g0, cfg), ConfigError);
  }
}

TEST_CASE("indicator integral has conditional mean IF under the data law") {
  // E[ integral of 1{Y <= y} dy | D, X ] = integral of F(y | D, X) dy; this
  // pins the orientation of the closed form (full interval below q1, zero
  // above q2). Checked by Monte Carlo for Y ~ N(0,1) on [q1, q2] = [-1, 1].
  Rng rng(32);
  const double q1 = -1.0, q2 = 1.0;
  double acc = 0.0;
  const int n = 400000;
  for (int i = 0; i < n; ++i) acc += indicator_integral(rng.normal(), q1, q2);
  acc /= n;
  // integral of Phi(y) over [-1,1] via the antiderivative y*Phi(y) + phi(y)
  const double truth = (q2 * norm_cdf(q2) + norm_pdf(q2)) -
                       (q1 * norm_cdf(q1) + norm_pdf(q1));
  CHECK(acc == doctest::Approx(truth).epsilon(0.01));
  CHECK(indicator_integral(q1 - 10.0, q1, q2) == q2 - q1);
  CHECK(indicator_integral(q2 + 10.0, q1, q2) == 0.0);
}
