#pragma once

#include <array>
#include <cstdint>
#include <numeric>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/QR>

#include "ocppe/common.hpp"
#include "ocppe/data.hpp"

namespace ocppe {

struct BasisSpec {
  int degree = 2;
  bool include_interactions = true;
  bool drop_collinear = false;

  void validate() const {
    if (degree < 1 || degree > 3)
      throw ConfigError("BasisSpec: degree must be 1, 2 or 3");
  }
};

// One monomial over the m = 1 + p_x input variables (variable 0 is d, then
// the controls in column order). Up to three factors, indices sorted.
struct BasisTerm {
  std::array<std::int32_t, 3> var{-1, -1, -1};
  int arity = 1;
};

// Deterministic term ordering so coefficient vectors are portable:
// per total degree t = 1..degree, first the pure powers v_i^t in variable
// order, then (with interactions) the mixed monomials of degree t in
// lexicographic order of their sorted index tuples.
inline std::vector<BasisTerm> basis_terms(const BasisSpec& spec, int px) {
  spec.validate();
  const int m = 1 + px;
  std::vector<BasisTerm> terms;
  for (int i = 0; i < m; ++i) terms.push_back({{i, -1, -1}, 1});
  if (spec.degree >= 2) {
    for (int i = 0; i < m; ++i) terms.push_back({{i, i, -1}, 2});
    if (spec.include_interactions)
      for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) terms.push_back({{i, j, -1}, 2});
  }
  if (spec.degree >= 3) {
    for (int i = 0; i < m; ++i) terms.push_back({{i, i, i}, 3});
    if (spec.include_interactions)
      for (int i = 0; i < m; ++i)
        for (int j = i; j < m; ++j)
          for (int k = j; k < m; ++k) {
            if (i == j && j == k) continue;
            terms.push_back({{i, j, k}, 3});
          }
  }
  return terms;
}

inline Eigen::Index basis_dimension(const BasisSpec& spec, int px) {
  return static_cast<Eigen::Index>(basis_terms(spec, px).size());
}

namespace detail {
inline double var_value(int v, double d, const double* x) {
  return v == 0 ? d : x[v - 1];
}
}  // namespace detail

inline void expand_basis_into(const std::vector<BasisTerm>& terms, double d,
                              const double* x, double* out) {
  for (std::size_t t = 0; t < terms.size(); ++t) {
    const auto& tm = terms[t];
    double v = detail::var_value(tm.var[0], d, x);
    for (int a = 1; a < tm.arity; ++a) v *= detail::var_value(tm.var[a], d, x);
    out[t] = v;
  }
}

// Exact d/dd of each term: a monomial d^c * r has derivative c * d^(c-1) * r.
inline void expand_basis_ddot_into(const std::vector<BasisTerm>& terms, double d,
                                   const double* x, double* out) {
  for (std::size_t t = 0; t < terms.size(); ++t) {
    const auto& tm = terms[t];
    int c = 0;
    double rest = 1.0;
    for (int a = 0; a < tm.arity; ++a) {
      if (tm.var[a] == 0)
        ++c;
      else
        rest *= x[tm.var[a] - 1];
    }
    if (c == 0) {
      out[t] = 0.0;
    } else if (c == 1) {
      out[t] = rest;
    } else {
      double p = static_cast<double>(c) * rest;
      for (int a = 1; a < c; ++a) p *= d;
      out[t] = p;
    }
  }
}

inline Eigen::VectorXd expand_basis(const BasisSpec& spec, double d,
                                    const Eigen::VectorXd& x) {
  const auto terms = basis_terms(spec, static_cast<int>(x.size()));
  Eigen::VectorXd out(static_cast<Eigen::Index>(terms.size()));
  expand_basis_into(terms, d, x.data(), out.data());
  return out;
}

inline Eigen::VectorXd expand_basis_ddot(const BasisSpec& spec, double d,
                                         const Eigen::VectorXd& x) {
  const auto terms = basis_terms(spec, static_cast<int>(x.size()));
  Eigen::VectorXd out(static_cast<Eigen::Index>(terms.size()));
  expand_basis_ddot_into(terms, d, x.data(), out.data());
  return out;
}

// Maps raw (d, x) points into the possibly collinearity-pruned basis used by
// a fit; stored alongside every serialized fit so coefficients stay portable.
struct BasisMap {
  BasisSpec spec;
  int px = 0;
  std::vector<BasisTerm> terms;          // full term list
  std::vector<Eigen::Index> kept;        // indices into terms, ascending
  double d_center = 0.0;                 // subtracted from d before expansion

  Eigen::Index dim() const { return static_cast<Eigen::Index>(kept.size()); }

  void expand(double d, const double* x, double* out) const {
    thread_local std::vector<double> buf;
    buf.resize(terms.size());
    expand_basis_into(terms, d - d_center, x, buf.data());
    for (Eigen::Index k = 0; k < dim(); ++k) out[k] = buf[static_cast<std::size_t>(kept[k])];
  }

  void expand_ddot(double d, const double* x, double* out) const {
    thread_local std::vector<double> buf;
    buf.resize(terms.size());
    expand_basis_ddot_into(terms, d - d_center, x, buf.data());
    for (Eigen::Index k = 0; k < dim(); ++k) out[k] = buf[static_cast<std::size_t>(kept[k])];
  }
};

// Cached n x p basis expansion of a sample together with its exact
// d-derivative. Built once per dataset and shared by the distribution
// regression and the Riesz step (they use the same expansion by default).
struct DesignMatrix {
  BasisMap map;
  Eigen::MatrixXd b;      // n x p expanded design
  Eigen::MatrixXd b_ddot; // n x p derivative of each term w.r.t. d

  Eigen::Index n() const { return b.rows(); }
  Eigen::Index p() const { return b.cols(); }
};

inline DesignMatrix build_design(const Dataset& data, const BasisSpec& spec,
                                 double d_center = 0.0) {
  spec.validate();
  const int px = static_cast<int>(data.px());
  const auto terms = basis_terms(spec, px);
  const auto n = data.n();
  const auto p_full = static_cast<Eigen::Index>(terms.size());

  Eigen::MatrixXd full(n, p_full), full_dd(n, p_full);
  std::vector<double> row(terms.size()), row_dd(terms.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd xr = data.x.row(i);
    expand_basis_into(terms, data.d[i] - d_center, xr.data(), row.data());
    expand_basis_ddot_into(terms, data.d[i] - d_center, xr.data(), row_dd.data());
    for (Eigen::Index j = 0; j < p_full; ++j) {
      full(i, j) = row[static_cast<std::size_t>(j)];
      full_dd(i, j) = row_dd[static_cast<std::size_t>(j)];
    }
  }

  std::vector<Eigen::Index> kept(static_cast<std::size_t>(p_full));
  std::iota(kept.begin(), kept.end(), Eigen::Index{0});

  if (spec.drop_collinear) {
    // Rank-revealing QR on the standardized design, pivot threshold 1e-9.
    Eigen::MatrixXd std_design = full;
    for (Eigen::Index j = 0; j < p_full; ++j) {
      const double mu = std_design.col(j).mean();
      std_design.col(j).array() -= mu;
      const double s = std_design.col(j).norm();
      if (s > 0.0) std_design.col(j) /= s;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(std_design);
    qr.setThreshold(1e-9);
    const Eigen::Index rank = qr.rank();
    const auto& perm = qr.colsPermutation().indices();
    kept.clear();
    for (Eigen::Index k = 0; k < rank; ++k) kept.push_back(perm[k]);
    std::sort(kept.begin(), kept.end());
  }

  DesignMatrix out;
  out.map.spec = spec;
  out.map.px = px;
  out.map.terms = terms;
  out.map.kept = kept;
  out.map.d_center = d_center;
  if (kept.size() == static_cast<std::size_t>(p_full)) {
    out.b = std::move(full);
    out.b_ddot = std::move(full_dd);
  } else {
    out.b.resize(n, static_cast<Eigen::Index>(kept.size()));
    out.b_ddot.resize(n, static_cast<Eigen::Index>(kept.size()));
    for (std::size_t k = 0; k < kept.size(); ++k) {
      out.b.col(static_cast<Eigen::Index>(k)) = full.col(kept[k]);
      out.b_ddot.col(static_cast<Eigen::Index>(k)) = full_dd.col(kept[k]);
    }
  }
  return out;
}

}  // namespace ocppe
