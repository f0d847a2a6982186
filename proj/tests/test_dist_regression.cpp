#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "ocppe/dist_regression.hpp"
#include "ocppe/rng.hpp"
#include "ocppe/simulation.hpp"
#include "support/oracles.hpp"

using namespace ocppe;

TEST_CASE("penalty level formula") {
  // Frozen from an independent evaluation of
  // 1.1 sqrt(n) Phi^{-1}(1 - (0.1/log n)/(2 p n)).
  CHECK(penalty_level_beta(500, 527) == doctest::Approx(133.20734712767808).epsilon(1e-10));
  CHECK(penalty_level_beta(500, 14) == doctest::Approx(116.22489721150498).epsilon(1e-10));
  CHECK(penalty_level_beta(500, 14) < penalty_level_beta(500, 527));

  double prev = 0.0;
  for (Eigen::Index p : {10, 100, 1000, 10000}) {
    const double lam = penalty_level_beta(500, p);
    CHECK(lam > prev);
    prev = lam;
  }
}

namespace {

struct ToyFit {
  Eigen::MatrixXd b;
  Eigen::VectorXd z;
};

ToyFit toy_logistic(int n, std::uint64_t seed) {
  Rng rng(seed);
  ToyFit t;
  t.b.resize(n, 2);
  t.z.resize(n);
  for (int i = 0; i < n; ++i) {
    t.b(i, 0) = rng.normal();
    t.b(i, 1) = rng.normal();
    const double eta = 0.3 + 0.8 * t.b(i, 0) - 0.5 * t.b(i, 1);
    t.z[i] = rng.uniform() < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0;
  }
  return t;
}

}  // namespace

TEST_CASE("lambda = 0 limit equals the unpenalized MLE from an independent IRLS oracle") {
  const auto t = toy_logistic(400, 91);
  Eigen::VectorXd loadings = Eigen::VectorXd::Ones(2);
  LogisticLassoOptions opt;
  opt.lambda = 0.0;
  opt.kkt_tol = 1e-9;
  opt.max_sweeps = 100000;
  const auto fit = logistic_lasso(t.b, t.z, loadings, opt);

  Eigen::MatrixXd a(400, 3);
  a.col(0).setOnes();
  a.rightCols(2) = t.b;
  const Eigen::VectorXd oracle = test_oracles::irls_logistic(a, t.z);
  CHECK(fit.intercept == doctest::Approx(oracle[0]).epsilon(1e-5));
  CHECK(fit.beta[0] == doctest::Approx(oracle[1]).epsilon(1e-5));
  CHECK(fit.beta[1] == doctest::Approx(oracle[2]).epsilon(1e-5));
}

TEST_CASE("huge lambda shrinks everything except the intercept") {
  const auto t = toy_logistic(200, 92);
  Eigen::VectorXd loadings = Eigen::VectorXd::Ones(2);
  LogisticLassoOptions opt;
  opt.lambda = 1e6;
  const auto fit = logistic_lasso(t.b, t.z, loadings, opt);
  CHECK(fit.beta.lpNorm<Eigen::Infinity>() == 0.0);
  const double zbar = t.z.mean();
  CHECK(sigmoid(fit.intercept) == doctest::Approx(zbar).epsilon(1e-6));
}

TEST_CASE("objective is nonincreasing across sweeps and KKT conditions hold") {
  const auto t = toy_logistic(300, 93);
  Eigen::MatrixXd b(300, 6);
  Rng rng(94);
  b.leftCols(2) = t.b;
  for (int j = 2; j < 6; ++j)
    for (int i = 0; i < 300; ++i) b(i, j) = rng.normal();

  Eigen::VectorXd loadings = penalty_loadings_initial(b, t.z);
  LogisticLassoOptions opt;
  opt.lambda = penalty_level_beta(300, 6);
  opt.track_objective = true;
  const auto fit = logistic_lasso(b, t.z, loadings, opt);

  REQUIRE(fit.objective_trace.size() >= 2);
  for (std::size_t s = 1; s < fit.objective_trace.size(); ++s)
    CHECK(fit.objective_trace[s] <= fit.objective_trace[s - 1] + 1e-12);

  // KKT: |(1/n) sum b_j (z - p)| <= (lambda/n) psi_j (+ tol), equality on support
  const auto n = b.rows();
  Eigen::VectorXd eta = Eigen::VectorXd::Constant(n, fit.intercept);
  for (int j = 0; j < 6; ++j) eta += b.col(j) * fit.beta[j];
  Eigen::VectorXd p(n);
  for (Eigen::Index i = 0; i < n; ++i) p[i] = sigmoid(eta[i]);
  const double lam_n = opt.lambda / static_cast<double>(n);
  for (int j = 0; j < 6; ++j) {
    const double score = b.col(j).dot(Eigen::VectorXd(t.z - p)) / static_cast<double>(n);
    if (fit.beta[j] == 0.0) {
      CHECK(std::abs(score) <= lam_n * loadings[j] + 1e-6 * lam_n);
    } else {
      CHECK(std::abs(score - lam_n * loadings[j] * (fit.beta[j] > 0 ? 1.0 : -1.0)) <=
            1e-6 * std::max(1.0, lam_n));
    }
  }
}

TEST_CASE("non-convergence raises an error carrying the objective") {
  const auto t = toy_logistic(300, 90);
  Eigen::VectorXd loadings = Eigen::VectorXd::Ones(2);
  LogisticLassoOptions opt;
  opt.lambda = 0.0;
  opt.max_sweeps = 1;
  opt.kkt_tol = 1e-15;
  try {
    logistic_lasso(t.b, t.z, loadings, opt);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("objective") != std::string::npos);
    CHECK(msg.find("KKT") != std::string::npos);
  }
}

TEST_CASE("penalty loadings") {
  SUBCASE("exact half loadings for a +-1 design with +-1/2 residuals") {
    Eigen::MatrixXd b(4, 2);
    b << 1, -1, -1, 1, 1, 1, -1, -1;
    Eigen::VectorXd z(4);
    z << 1, 0, 1, 0;
    const Eigen::VectorXd w = penalty_loadings(b, z, Eigen::VectorXd::Constant(4, 0.5));
    CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(w[1] == doctest::Approx(0.5).epsilon(1e-15));
  }

  SUBCASE("degenerate outcome floors at 1e-8") {
    Eigen::MatrixXd b(3, 1);
    b << 1, 2, 3;
    Eigen::VectorXd z = Eigen::VectorXd::Ones(3);
    const Eigen::VectorXd w = penalty_loadings(b, z, Eigen::VectorXd::Ones(3));
    CHECK(w[0] == 1e-8);
  }

  SUBCASE("two-column toy design matches hand arithmetic") {
    Eigen::MatrixXd b(2, 2);
    b << 2, 1, 0, 3;
    Eigen::VectorXd z(2);
    z << 1, 0;
    Eigen::VectorXd prob(2);
    prob << 0.25, 0.5;
    // residuals: 0.75, -0.5
    const Eigen::VectorXd w = penalty_loadings(b, z, prob);
    CHECK(w[0] == doctest::Approx(std::sqrt((4 * 0.5625 + 0.0) / 2.0)).epsilon(1e-14));
    CHECK(w[1] == doctest::Approx(std::sqrt((0.5625 + 9 * 0.25) / 2.0)).epsilon(1e-14));
  }
}

TEST_CASE("lasso_dr_fit binarizes at the level and matches the core solver") {
  const auto t = toy_logistic(250, 97);
  Eigen::VectorXd y(250);
  Rng rng(98);
  for (int i = 0; i < 250; ++i) y[i] = t.z[i] + 0.1 * rng.uniform();
  Eigen::VectorXd loadings = Eigen::VectorXd::Ones(2);
  DrConfig cfg;
  const Eigen::VectorXd full = lasso_dr_fit(t.b, y, 0.5, 20.0, loadings, cfg);

  Eigen::VectorXd z(250);
  for (int i = 0; i < 250; ++i) z[i] = y[i] <= 0.5 ? 1.0 : 0.0;
  LogisticLassoOptions opt;
  opt.lambda = 20.0;
  const auto direct = logistic_lasso(t.b, z, loadings, opt);
  CHECK(full[0] == direct.intercept);
  CHECK(full[1] == direct.beta[0]);
  CHECK(full[2] == direct.beta[1]);
}

TEST_CASE("post-lasso at full support equals the full MLE") {
  const auto t = toy_logistic(350, 95);
  std::vector<Eigen::Index> support = {0, 1};
  const auto post = post_lasso_refit(t.b, t.z, support);
  REQUIRE(post.converged);
  Eigen::MatrixXd a(350, 3);
  a.col(0).setOnes();
  a.rightCols(2) = t.b;
  const Eigen::VectorXd oracle = test_oracles::irls_logistic(a, t.z);
  CHECK(post.intercept == doctest::Approx(oracle[0]).epsilon(1e-7));
  CHECK(post.beta[0] == doctest::Approx(oracle[1]).epsilon(1e-7));
  CHECK(post.beta[1] == doctest::Approx(oracle[2]).epsilon(1e-7));
}

TEST_CASE("post-lasso with empty support is the intercept-only fit") {
  // The intercept stays in the model per the always-unpenalized-intercept
  // convention, so the empty-support refit returns logit(mean(z)).
  const auto t = toy_logistic(150, 96);
  const auto post = post_lasso_refit(t.b, t.z, {});
  CHECK(post.beta.size() == 0);
  CHECK(sigmoid(post.intercept) == doctest::Approx(t.z.mean()).epsilon(1e-8));
}

TEST_CASE("separation is detected and reported") {
  Eigen::MatrixXd b(8, 1);
  Eigen::VectorXd z(8);
  for (int i = 0; i < 8; ++i) {
    b(i, 0) = i < 4 ? -1.0 - i : 1.0 + i;
    z[i] = i < 4 ? 0.0 : 1.0;
  }
  const auto post = post_lasso_refit(b, z, {0});
  CHECK(post.separation);
}

namespace {

Dataset small_dgp(Eigen::Index n, std::uint64_t seed, double r2 = 0.2, int px = 5) {
  DgpConfig cfg;
  cfg.n = n;
  cfg.p_x = px;
  cfg.r_d2 = r2;
  cfg.r_y2 = r2;
  cfg.seed = seed;
  return dgp_sample(cfg);
}

}  // namespace

TEST_CASE("fit_grid layout: J = 2 gives three fits with exact quantile endpoints") {
  const auto data = small_dgp(300, 7);
  BasisSpec spec{1, true, false};
  const DesignMatrix design = build_design(data, spec);
  DrConfig cfg;
  cfg.grid_points = 2;
  const auto fit = fit_grid(design, data.y, 0.25, 0.75, cfg);
  REQUIRE(fit.points.size() == 3);
  CHECK(fit.points[0].y == estimate_quantile(data.y, 0.25).q_hat);
  CHECK(fit.points[2].y == estimate_quantile(data.y, 0.75).q_hat);
  CHECK(fit.points[1].y == doctest::Approx(0.5 * (fit.q1 + fit.q2)));
  CHECK(fit.q1 == fit.points[0].y);
  CHECK(fit.q2 == fit.points[2].y);
}

TEST_CASE("post-lasso support is contained in the lasso support") {
  const auto data = small_dgp(400, 8);
  BasisSpec spec{2, true, false};
  const DesignMatrix design = build_design(data, spec);
  DrConfig cfg;
  cfg.grid_points = 5;
  const auto fit = fit_grid(design, data.y, 0.2, 0.8, cfg);
  for (const auto& pt : fit.points) {
    if (pt.degenerate) continue;
    CHECK(pt.coef.size() == static_cast<Eigen::Index>(pt.support.size()));
    for (std::size_t k = 0; k + 1 < pt.support.size(); ++k)
      CHECK(pt.support[k] < pt.support[k + 1]);
  }
}

TEST_CASE("zero-coefficient grid fit gives the constant-half functionals") {
  DRGridFit fit;
  fit.link = LinkKind::Logistic;
  fit.q1 = 1.0;
  fit.q2 = 3.0;
  fit.dy = 1.0;
  fit.tau1 = 0.25;
  fit.tau2 = 0.75;
  BasisSpec spec{1, true, false};
  fit.map.spec = spec;
  fit.map.px = 1;
  fit.map.terms = basis_terms(spec, 1);
  fit.map.kept = {0, 1};
  for (int j = 0; j <= 2; ++j) {
    DrPointFit pt;
    pt.y = 1.0 + j;
    pt.intercept = 0.0;
    fit.points.push_back(pt);
  }
  Eigen::VectorXd x(1);
  x << 0.3;
  CHECK(F_hat(fit, 0, 0.7, x) == doctest::Approx(0.5));
  CHECK(DF_hat(fit, 0, 0.7, x) == doctest::Approx(0.0));
  CHECK(IF_hat(fit, 0.7, x) == doctest::Approx(0.5 * (fit.q2 - fit.q1)));
  CHECK(IDF_hat(fit, 0.7, x) == doctest::Approx(0.0));
}

TEST_CASE("DF matches central finite differences of F at random points") {
  const auto data = small_dgp(500, 9);
  BasisSpec spec{2, true, false};
  const DesignMatrix design = build_design(data, spec);
  DrConfig cfg;
  cfg.grid_points = 4;
  const auto fit = fit_grid(design, data.y, 0.2, 0.8, cfg);

  Rng rng(10);
  for (int rep = 0; rep < 100; ++rep) {
    const double d = 2.0 * rng.normal();
    Eigen::VectorXd x(5);
    for (int j = 0; j < 5; ++j) x[j] = rng.normal();
    const int j = static_cast<int>(rng.next() % 5);
    const double h = 1e-5 * (1.0 + std::abs(d));
    const double fd = (F_hat(fit, j, d + h, x) - F_hat(fit, j, d - h, x)) / (2 * h);
    const double an = DF_hat(fit, j, d, x);
    CHECK(std::abs(an - fd) <= 1e-6 * std::max(1.0, std::abs(an)));
  }
}

TEST_CASE("IF is bounded by the quantile gap and F stays inside (0,1)") {
  const auto data = small_dgp(300, 11);
  BasisSpec spec{1, true, false};
  const DesignMatrix design = build_design(data, spec);
  DrConfig cfg;
  cfg.grid_points = 6;
  const auto fit = fit_grid(design, data.y, 0.3, 0.7, cfg);
  Rng rng(12);
  for (int rep = 0; rep < 50; ++rep) {
    const double d = rng.normal();
    Eigen::VectorXd x(5);
    for (int j = 0; j < 5; ++j) x[j] = rng.normal();
    const double v = IF_hat(fit, d, x);
    CHECK(v >= 0.0);
    CHECK(v <= fit.q2 - fit.q1 + 1e-12);
    for (int j = 0; j <= 6; ++j) {
      const double f = F_hat(fit, j, d, x);
      CHECK(f > 0.0);
      CHECK(f < 1.0);
    }
  }
}

TEST_CASE("monotonicity diagnostic: mean fitted F nondecreasing along the grid") {
  const auto data = small_dgp(1000, 13);
  BasisSpec spec{2, true, false};
  const DesignMatrix design = build_design(data, spec);
  DrConfig cfg;
  cfg.grid_points = 8;
  const auto fit = fit_grid(design, data.y, 0.2, 0.8, cfg);

  double prev = -1.0;
  for (int j = 0; j <= 8; ++j) {
    double mean_f = 0.0;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      Eigen::VectorXd x = data.x.row(i);
      mean_f += F_hat(fit, j, data.d[i], x);
    }
    mean_f /= static_cast<double>(data.n());
    CHECK(mean_f >= prev - 0.02);
    prev = std::max(prev, mean_f);
  }
}

TEST_CASE("degenerate grid level is fit as the empirical constant") {
  Dataset data;
  data.y.resize(20);
  data.d.resize(20);
  data.x.resize(20, 1);
  Rng rng(14);
  for (int i = 0; i < 20; ++i) {
    data.y[i] = static_cast<double>(i);
    data.d[i] = rng.normal();
    data.x(i, 0) = rng.normal();
  }
  BasisSpec spec{1, true, false};
  const DesignMatrix design = build_design(data, spec);
  Eigen::VectorXd z = Eigen::VectorXd::Ones(20);
  DrPointFit pt;
  LogisticLassoResult warm;
  DrConfig cfg;
  detail::dr_fit_point(design.b, z, 10.0, cfg, pt, warm, false);
  CHECK(pt.degenerate);
  CHECK(pt.degenerate_value == 1.0);
}

TEST_CASE("probit link is available and differentiates through the normal pdf") {
  const auto data = small_dgp(400, 16);
  BasisSpec spec{1, true, false};
  const DesignMatrix design = build_design(data, spec);
  DrConfig cfg;
  cfg.grid_points = 3;
  cfg.link = LinkKind::Probit;
  const auto fit = fit_grid(design, data.y, 0.3, 0.7, cfg);
  Eigen::VectorXd x(5);
  x.setZero();
  const double h = 1e-5;
  const double fd = (F_hat(fit, 1, 0.5 + h, x) - F_hat(fit, 1, 0.5 - h, x)) / (2 * h);
  CHECK(DF_hat(fit, 1, 0.5, x) == doctest::Approx(fd).epsilon(1e-6));
}

TEST_CASE("fitted conditional CDF tracks the DGP truth at n = 2000") {
  DgpConfig dcfg;
  dcfg.n = 2000;
  dcfg.p_x = 30;
  dcfg.r_d2 = 0.2;
  dcfg.r_y2 = 0.2;
  dcfg.seed = 15;
  const DgpParams par = dgp_params(dcfg);
  const Dataset data = dgp_sample(dcfg, par, 0);
  BasisSpec spec{2, true, false};
  const DesignMatrix design = build_design(data, spec);
  DrConfig cfg;
  cfg.grid_points = 4;
  const auto fit = fit_grid(design, data.y, 0.3, 0.7, cfg);

  const Dataset held = dgp_sample(dcfg, par, 1);
  double sq = 0.0;
  int count = 0;
  for (Eigen::Index i = 0; i < 400; ++i) {
    Eigen::VectorXd x = held.x.row(i);
    for (int j = 0; j <= 4; ++j) {
      const double mu = held.d[i] + x.dot(par.coef_y) + held.d[i] * x[0];
      const double truth = norm_cdf(fit.points[static_cast<std::size_t>(j)].y - mu);
      const double est = F_hat(fit, j, held.d[i], x);
      sq += (est - truth) * (est - truth);
      ++count;
    }
  }
  const double rms = std::sqrt(sq / count);
  CHECK(rms <= 0.05);
}

TEST_CASE("lasso selects the strongest DGP signals") {
  // At the median grid level the index is y - d - c_y delta0'x - d x1: the
  // d, x1 and d*x1 terms carry the largest true coefficients.
  int hits = 0;
  const int reps = 20;
  for (int r = 0; r < reps; ++r) {
    DgpConfig dcfg;
    dcfg.n = 2000;
    dcfg.p_x = 10;
    dcfg.r_d2 = 0.2;
    dcfg.r_y2 = 0.2;
    dcfg.seed = 100 + static_cast<std::uint64_t>(r);
    const Dataset data = dgp_sample(dcfg);
    BasisSpec spec{2, true, false};
    const DesignMatrix design = build_design(data, spec);
    const double level = estimate_quantile(data.y, 0.5).q_hat;
    Eigen::VectorXd z(data.n());
    for (Eigen::Index i = 0; i < data.n(); ++i) z[i] = data.y[i] <= level ? 1.0 : 0.0;

    DrPointFit pt;
    LogisticLassoResult warm;
    DrConfig cfg;
    detail::dr_fit_point(design.b, z, penalty_level_beta(data.n(), design.p()), cfg, pt,
                         warm, false);
    // degree-2 layout with m = 11 variables: d is term 0, x1 is term 1,
    // d*x1 is the first pairwise interaction at index 2m
    const Eigen::Index m = 11;
    bool has_d = false, has_x1 = false, has_dx1 = false;
    for (auto j : pt.support) {
      if (j == 0) has_d = true;
      if (j == 1) has_x1 = true;
      if (j == 2 * m) has_dx1 = true;
    }
    if (has_d && has_x1 && has_dx1) ++hits;
  }
  CHECK(hits >= 16);  // >= 80% of 20 replications
}
