#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "ocppe/common.hpp"
#include "ocppe/math.hpp"

namespace ocppe {

struct QuantileFit {
  double tau = 0.0;
  double q_hat = 0.0;
  Eigen::Index n = 0;
};

enum class Kernel { Gaussian, Epanechnikov };

struct DensityConfig {
  double bandwidth_constant = 1.06;  // h = constant * sd(y) * n^{-exponent}
  double bandwidth_exponent = 0.2;   // must lie in (1/8, 1/2)
  Kernel kernel = Kernel::Gaussian;
  double bandwidth_override = 0.0;   // > 0 fixes h directly

  void validate() const {
    if (bandwidth_override > 0.0) return;
    if (!(bandwidth_exponent > 0.125 && bandwidth_exponent < 0.5))
      throw ConfigError("DensityConfig: bandwidth exponent must lie in (1/8, 1/2)");
    if (!(bandwidth_constant > 0.0))
      throw ConfigError("DensityConfig: bandwidth constant must be positive");
  }
};

struct DensityFit {
  double at = 0.0;
  double f_hat = 0.0;
  double bandwidth = 0.0;
  std::string kernel;
};

// Unconditional quantile as the ceil(n*tau)-th order statistic, which is an
// exact minimizer of the check loss sum rho_tau(Y_i - q).
inline QuantileFit estimate_quantile(const Eigen::VectorXd& y, double tau) {
  if (!(tau > 0.0 && tau < 1.0))
    throw ConfigError("estimate_quantile: tau must lie in (0,1)");
  if (y.size() < 2) throw DataError("estimate_quantile: need at least 2 observations");
  std::vector<double> v(y.data(), y.data() + y.size());
  QuantileFit fit;
  fit.tau = tau;
  fit.q_hat = order_stat_quantile(std::move(v), tau);
  fit.n = y.size();
  return fit;
}

inline double kernel_value(Kernel k, double u) {
  switch (k) {
    case Kernel::Gaussian: return norm_pdf(u);
    case Kernel::Epanechnikov: return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
  }
  return 0.0;
}

inline double default_bandwidth(const Eigen::VectorXd& y, const DensityConfig& cfg) {
  if (cfg.bandwidth_override > 0.0) return cfg.bandwidth_override;
  const double s = sd_pop(y);
  const double h = cfg.bandwidth_constant * s *
                   std::pow(static_cast<double>(y.size()), -cfg.bandwidth_exponent);
  return h > 0.0 ? h : 1e-3;  // guard against a constant sample
}

inline DensityFit estimate_density(const Eigen::VectorXd& y, double at,
                                   const DensityConfig& cfg = {}) {
  cfg.validate();
  const double h = default_bandwidth(y, cfg);
  const auto n = y.size();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) acc += kernel_value(cfg.kernel, (y[i] - at) / h);
  DensityFit fit;
  fit.at = at;
  fit.f_hat = acc / (static_cast<double>(n) * h);
  fit.bandwidth = h;
  fit.kernel = cfg.kernel == Kernel::Gaussian ? "gaussian" : "epanechnikov";
  return fit;
}

}  // namespace ocppe
