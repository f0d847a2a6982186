#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ocppe/data.hpp"
#include "ocppe/expr.hpp"
#include "ocppe/math.hpp"

namespace ocppe {

enum class InterventionKind {
  LocationShift,       // G_delta(d) = d + step*delta
  Scale,               // G_delta(d) = d*(1 + rate*delta)
  LocationScale,       // G_delta(d) = (d - mu)*(1 + s1*delta) + mu + s2*delta
  TargetPerturbation,  // G_delta(d) = d + delta*(g0(d) - d)
  CovariateDependent,  // G supplied as an expression in (d, x, delta, sigma)
  Distributional       // target CDF G0; handled by the distributional-perturbation estimator
};

// Target CDF for distributional interventions.
struct TargetCdf {
  enum class Family { Normal, Uniform, Table } family = Family::Normal;
  double mean = 0.0, sd = 1.0;       // Normal
  double lo = 0.0, hi = 1.0;         // Uniform
  std::vector<std::pair<double, double>> table;  // (t, G0(t)), piecewise linear

  void validate() const {
    switch (family) {
      case Family::Normal:
        if (!(sd > 0.0))
          throw ConfigError("target CDF: normal family needs sd > 0 (point mass rejected)");
        return;
      case Family::Uniform:
        if (!(hi > lo))
          throw ConfigError("target CDF: uniform family needs hi > lo (point mass rejected)");
        return;
      case Family::Table: {
        if (table.size() < 2) throw ConfigError("target CDF: table needs at least 2 rows");
        double prev_t = table.front().first, prev_g = table.front().second;
        for (std::size_t i = 1; i < table.size(); ++i) {
          if (!(table[i].first > prev_t))
            throw ConfigError("target CDF: table abscissae must be strictly increasing");
          if (table[i].second < prev_g - 1e-12)
            throw ConfigError("target CDF: table values must be nondecreasing");
          prev_t = table[i].first;
          prev_g = table[i].second;
        }
        if (std::abs(table.front().second) > 1e-6 || std::abs(table.back().second - 1.0) > 1e-6)
          throw ConfigError("target CDF: table must run from 0 to 1");
        if (table.back().second - table.front().second < 1e-6)
          throw ConfigError("target CDF: degenerate table (point mass rejected)");
        return;
      }
    }
  }

  double operator()(double t) const {
    switch (family) {
      case Family::Normal: return norm_cdf((t - mean) / sd);
      case Family::Uniform:
        if (t <= lo) return 0.0;
        if (t >= hi) return 1.0;
        return (t - lo) / (hi - lo);
      case Family::Table: {
        if (t <= table.front().first) return table.front().second;
        if (t >= table.back().first) return table.back().second;
        std::size_t j = 1;
        while (table[j].first < t) ++j;
        const auto& [t0, g0] = table[j - 1];
        const auto& [t1, g1] = table[j];
        return g0 + (g1 - g0) * (t - t0) / (t1 - t0);
      }
    }
    return 0.0;
  }
};

// A one-parameter family of counterfactual treatment maps G_delta with
// G_0 = identity. Only vartheta = dG/ddelta at delta=0 and its d-derivative
// enter the estimators; both are exact (closed form per kind, or symbolic
// differentiation of a supplied expression).
class Intervention {
 public:
  static Intervention location_shift(double step = 1.0) {
    Intervention g;
    g.kind_ = InterventionKind::LocationShift;
    g.params_ = {step};
    return g;
  }

  static Intervention scale(double rate = 1.0) {
    Intervention g;
    g.kind_ = InterventionKind::Scale;
    g.params_ = {rate};
    return g;
  }

  static Intervention location_scale(double mu, double s1, double s2) {
    Intervention g;
    g.kind_ = InterventionKind::LocationScale;
    g.params_ = {mu, s1, s2};
    return g;
  }

  // The simulation intervention G_delta(D) = (D + 3 delta)(1 + delta) has
  // vartheta(d) = 3 + d and vartheta'(d) = 1, identical to
  // location_scale(0, 1, 3); that canonical form is used throughout.
  static Intervention simulation_location_scale() { return location_scale(0.0, 1.0, 3.0); }

  static Intervention target_perturbation(const std::string& g0_expr) {
    Intervention g;
    g.kind_ = InterventionKind::TargetPerturbation;
    g.g0_ = parse_expr(g0_expr);
    // G = d + delta*(g0(d) - d)  =>  theta = g0(d) - d.
    g.theta_ = Expr::sub(g.g0_, Expr::var_d());
    g.theta_d_ = expr_diff(g.theta_, DiffVar::D);
    return g;
  }

  static Intervention covariate_dependent(const std::string& g_expr) {
    Intervention g;
    g.kind_ = InterventionKind::CovariateDependent;
    g.gfun_ = parse_expr(g_expr);
    g.theta_ = expr_at_delta0(expr_diff(g.gfun_, DiffVar::Delta));
    g.theta_d_ = expr_diff(g.theta_, DiffVar::D);
    return g;
  }

  static Intervention distributional(TargetCdf cdf) {
    cdf.validate();
    Intervention g;
    g.kind_ = InterventionKind::Distributional;
    g.cdf_ = std::move(cdf);
    return g;
  }

  InterventionKind kind() const { return kind_; }
  const std::vector<double>& sigma() const { return sigma_; }
  const TargetCdf& target_cdf() const {
    if (kind_ != InterventionKind::Distributional)
      throw ConfigError("target_cdf: only defined for distributional interventions");
    return *cdf_;
  }
  bool depends_on_x() const { return kind_ == InterventionKind::CovariateDependent; }

  // Bind the free parameter vector sigma. Location shift: step = sigma[0];
  // scale: rate = sigma[0]; location-scale: (s1) or (s1, s2); expression
  // kinds: substitutes s1..sK at evaluation time.
  Intervention with_sigma(std::vector<double> sigma) const {
    Intervention g = *this;
    switch (kind_) {
      case InterventionKind::LocationShift:
      case InterventionKind::Scale:
        if (sigma.size() != 1)
          throw ConfigError("with_sigma: this intervention family takes 1 sigma component");
        g.params_[0] = sigma[0];
        break;
      case InterventionKind::LocationScale:
        if (sigma.size() == 1) {
          g.params_[1] = sigma[0];
        } else if (sigma.size() == 2) {
          g.params_[1] = sigma[0];
          g.params_[2] = sigma[1];
        } else {
          throw ConfigError("with_sigma: location-scale takes 1 or 2 sigma components");
        }
        break;
      case InterventionKind::TargetPerturbation:
      case InterventionKind::CovariateDependent:
        break;  // sigma feeds s1..sK in the expression
      case InterventionKind::Distributional:
        throw ConfigError("with_sigma: distributional interventions are not sigma-indexed");
    }
    g.sigma_ = std::move(sigma);
    return g;
  }

  // vartheta(d[,x]) = dG_delta/ddelta at delta = 0.
  double vartheta(double d, const double* x = nullptr, int n_x = 0) const {
    switch (kind_) {
      case InterventionKind::LocationShift: return params_[0];
      case InterventionKind::Scale: return params_[0] * d;
      case InterventionKind::LocationScale:
        return params_[1] * (d - params_[0]) + params_[2];
      case InterventionKind::TargetPerturbation:
      case InterventionKind::CovariateDependent: {
        if (kind_ == InterventionKind::CovariateDependent && x == nullptr)
          throw ConfigError("vartheta: covariate-dependent intervention needs x");
        return expr_eval(theta_, env(d, x, n_x));
      }
      case InterventionKind::Distributional:
        throw ConfigError(
            "vartheta: distributional interventions require F_D and f_D; "
            "use the distributional-perturbation estimator");
    }
    throw NumericError("vartheta: corrupt intervention");
  }

  // d(vartheta)/dd, exact.
  double vartheta_prime(double d, const double* x = nullptr, int n_x = 0) const {
    switch (kind_) {
      case InterventionKind::LocationShift: return 0.0;
      case InterventionKind::Scale: return params_[0];
      case InterventionKind::LocationScale: return params_[1];
      case InterventionKind::TargetPerturbation:
      case InterventionKind::CovariateDependent: {
        if (kind_ == InterventionKind::CovariateDependent && x == nullptr)
          throw ConfigError("vartheta_prime: covariate-dependent intervention needs x");
        return expr_eval(theta_d_, env(d, x, n_x));
      }
      case InterventionKind::Distributional:
        throw ConfigError("vartheta_prime: not defined for distributional interventions");
    }
    throw NumericError("vartheta_prime: corrupt intervention");
  }

  // G_delta(d[,x]) itself; used by the validity check and by tests.
  double g_delta(double d, double delta, const double* x = nullptr, int n_x = 0) const {
    switch (kind_) {
      case InterventionKind::LocationShift: return d + params_[0] * delta;
      case InterventionKind::Scale: return d * (1.0 + params_[0] * delta);
      case InterventionKind::LocationScale:
        return (d - params_[0]) * (1.0 + params_[1] * delta) + params_[0] +
               params_[2] * delta;
      case InterventionKind::TargetPerturbation:
        return d + delta * (expr_eval(g0_, env(d, x, n_x)) - d);
      case InterventionKind::CovariateDependent: {
        ExprEnv e = env(d, x, n_x);
        e.delta = delta;
        return expr_eval(gfun_, e);
      }
      case InterventionKind::Distributional:
        throw ConfigError("g_delta: not defined for distributional interventions");
    }
    throw NumericError("g_delta: corrupt intervention");
  }

  // Numeric admissibility check on the sample: vartheta finite everywhere and
  // G_delta strictly increasing in d at delta = +-0.01 over the sample range.
  void validate_on(const Dataset& data) const {
    if (kind_ == InterventionKind::Distributional) return;
    const auto n = data.n();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double* xr = data.px() > 0 ? data.x.row(i).data() : nullptr;
      Eigen::VectorXd xrow;
      if (data.px() > 0) {
        xrow = data.x.row(i);
        xr = xrow.data();
      }
      const double th = vartheta(data.d[i], xr, static_cast<int>(data.px()));
      if (!std::isfinite(th))
        throw DataError("intervention: vartheta non-finite at observation " +
                        std::to_string(i));
    }
    const double lo = data.d.minCoeff(), hi = data.d.maxCoeff();
    if (!(hi > lo)) return;
    constexpr int kGrid = 101;
    Eigen::VectorXd x0;
    const double* xr = nullptr;
    if (depends_on_x() && data.px() > 0) {
      x0 = data.x.colwise().mean();
      xr = x0.data();
    }
    for (double delta : {0.01, -0.01}) {
      double prev = g_delta(lo, delta, xr, static_cast<int>(data.px()));
      for (int k = 1; k < kGrid; ++k) {
        const double d = lo + (hi - lo) * k / (kGrid - 1);
        const double cur = g_delta(d, delta, xr, static_cast<int>(data.px()));
        if (!(cur > prev))
          throw ConfigError(
              "intervention: G_delta is not strictly increasing in d at delta = " +
              std::to_string(delta));
        prev = cur;
      }
    }
  }

 private:
  ExprEnv env(double d, const double* x, int n_x) const {
    ExprEnv e;
    e.d = d;
    e.x = x;
    e.n_x = n_x;
    e.sigma = sigma_.data();
    e.n_sigma = static_cast<int>(sigma_.size());
    return e;
  }

  InterventionKind kind_ = InterventionKind::LocationShift;
  std::vector<double> params_{1.0};
  std::vector<double> sigma_;
  ExprPtr gfun_, g0_, theta_, theta_d_;
  std::optional<TargetCdf> cdf_;
};

// Per-observation vartheta over a sample.
inline Eigen::VectorXd vartheta_vector(const Intervention& g, const Dataset& data) {
  const auto n = data.n();
  Eigen::VectorXd out(n);
  Eigen::VectorXd xrow;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* xr = nullptr;
    if (data.px() > 0) {
      xrow = data.x.row(i);
      xr = xrow.data();
    }
    out[i] = g.vartheta(data.d[i], xr, static_cast<int>(data.px()));
  }
  return out;
}

}  // namespace ocppe
