#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ocppe/common.hpp"

namespace ocppe {

// One estimation sample: outcome y, continuous treatment d, controls x.
// Immutable after construction; all downstream operations are pure.
struct Dataset {
  Eigen::VectorXd y;
  Eigen::VectorXd d;
  Eigen::MatrixXd x;
  std::vector<std::string> control_names;

  Eigen::Index n() const { return y.size(); }
  Eigen::Index px() const { return x.cols(); }

  void validate() const {
    if (y.size() < 2) throw DataError("Dataset: need at least 2 observations");
    if (d.size() != y.size() || (x.size() > 0 && x.rows() != y.size()))
      throw DataError("Dataset: column lengths differ");
    if (!y.allFinite() || !d.allFinite() || !x.allFinite())
      throw DataError("Dataset: non-finite value found (missing data is rejected)");
    if (!control_names.empty() &&
        control_names.size() != static_cast<std::size_t>(x.cols()))
      throw DataError("Dataset: control_names length does not match x columns");
  }

  Dataset rows(const std::vector<Eigen::Index>& idx) const {
    Dataset out;
    out.y.resize(static_cast<Eigen::Index>(idx.size()));
    out.d.resize(static_cast<Eigen::Index>(idx.size()));
    out.x.resize(static_cast<Eigen::Index>(idx.size()), x.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      out.y[static_cast<Eigen::Index>(k)] = y[idx[k]];
      out.d[static_cast<Eigen::Index>(k)] = d[idx[k]];
      out.x.row(static_cast<Eigen::Index>(k)) = x.row(idx[k]);
    }
    out.control_names = control_names;
    return out;
  }
};

}  // namespace ocppe
