#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ocppe {

// Error taxonomy mirrors the CLI exit codes: config -> 2, data -> 3, numeric -> 4.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Smallest admissible quantile gap tau2 - tau1. Artifact constant guarding the
// 1/(tau2 - tau1) factor in the score; not a value taken from any reference.
inline constexpr double kMinTauGap = 0.01;

// Index of one target parameter: a quantile range plus the intervention
// parameter vector sigma.
struct IndexU {
  double tau1 = 0.0;
  double tau2 = 0.0;
  std::vector<double> sigma;

  IndexU() = default;
  IndexU(double t1, double t2, std::vector<double> s = {})
      : tau1(t1), tau2(t2), sigma(std::move(s)) {
    validate();
  }

  void validate() const {
    if (!(tau1 > 0.0 && tau1 < 1.0) || !(tau2 > 0.0 && tau2 < 1.0))
      throw ConfigError("IndexU: tau1 and tau2 must lie in (0,1)");
    if (!(tau1 < tau2))
      throw ConfigError("IndexU: tau1 must be strictly below tau2");
    if (tau2 - tau1 < kMinTauGap - 1e-12)
      throw ConfigError("IndexU: tau2 - tau1 must be at least 0.01");
  }
};

}  // namespace ocppe
