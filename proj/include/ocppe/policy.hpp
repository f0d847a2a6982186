#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ocppe/inference.hpp"
#include "ocppe/parallel.hpp"
#include "ocppe/rng.hpp"
#include "ocppe/score.hpp"

namespace ocppe {

struct FeatureDef {
  std::string column;  // control name, or "x<k>" / numeric index when unnamed
  enum class Op { Eq, Gt, Ge } op = Op::Gt;
  double threshold = 0.0;
};

inline Eigen::Index resolve_column(const Dataset& data, const std::string& column) {
  for (std::size_t j = 0; j < data.control_names.size(); ++j)
    if (data.control_names[j] == column) return static_cast<Eigen::Index>(j);
  std::string name = column;
  if (!name.empty() && (name[0] == 'x' || name[0] == 'X')) name = name.substr(1);
  try {
    const int j = std::stoi(name);
    if (j >= 1 && j <= data.px()) return static_cast<Eigen::Index>(j - 1);
  } catch (const std::exception&) {
  }
  throw ConfigError("policy: unknown feature column '" + column + "'");
}

inline bool feature_value(const Dataset& data, Eigen::Index i, const FeatureDef& f,
                          Eigen::Index col) {
  const double v = data.x(i, col);
  switch (f.op) {
    case FeatureDef::Op::Eq: return v == f.threshold;
    case FeatureDef::Op::Gt: return v > f.threshold;
    case FeatureDef::Op::Ge: return v >= f.threshold;
  }
  return false;
}

// Cells are displayed with feature 1 as the
// most significant bit, so for k = 2 the display order of cells is
// (1,1), (1,0), (0,1), (0,0). A rule is a bitmask over cell ids.
struct PolicyClass {
  std::vector<FeatureDef> features;

  int k() const { return static_cast<int>(features.size()); }
  int n_cells() const { return 1 << k(); }
  std::uint32_t n_rules() const { return 1u << n_cells(); }

  void validate() const {
    if (features.empty() || features.size() > 4)
      throw ConfigError("policy: between 1 and 4 conditioning features required");
  }
};

inline std::vector<int> assign_cells(const Dataset& data, const PolicyClass& pc) {
  pc.validate();
  std::vector<Eigen::Index> cols;
  for (const auto& f : pc.features) cols.push_back(resolve_column(data, f.column));
  std::vector<int> cell(static_cast<std::size_t>(data.n()), 0);
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    int c = 0;
    for (int j = 0; j < pc.k(); ++j)
      if (feature_value(data, i, pc.features[static_cast<std::size_t>(j)], cols[static_cast<std::size_t>(j)]))
        c |= 1 << (pc.k() - 1 - j);
    cell[static_cast<std::size_t>(i)] = c;
  }
  return cell;
}

// Rule serialization in display order: treated indicator per cell,
// cells listed by descending cell id.
inline std::vector<int> rule_vector(std::uint32_t mask, int n_cells) {
  std::vector<int> out;
  for (int c = n_cells - 1; c >= 0; --c) out.push_back((mask >> c) & 1u);
  return out;
}

struct CrossfitResult {
  Eigen::VectorXd w;            // out-of-fold welfare signals, theta = 0
  std::vector<int> fold;        // fold id per observation
  double theta_crossfit = 0.0;  // mean(w)
  int folds = 0;
};

// Cross-fitting: K even-sized folds, nuisances fit on each
// complement, signals evaluated on the held-out fold.
inline CrossfitResult crossfit_scores(const Dataset& data, const IndexU& u,
                                      const Intervention& g, int folds,
                                      std::uint64_t seed, const EstimatorConfig& cfg = {}) {
  data.validate();
  if (folds < 2) throw ConfigError("crossfit_scores: need at least 2 folds");
  if (data.n() < 10 * folds)
    throw ConfigError("crossfit_scores: need n >= 10*K observations");

  const auto n = data.n();
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  Rng rng(seed);
  for (std::size_t i = perm.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.next() % i);
    std::swap(perm[i - 1], perm[j]);
  }

  CrossfitResult res;
  res.folds = folds;
  res.fold.assign(static_cast<std::size_t>(n), 0);
  for (std::size_t r = 0; r < perm.size(); ++r)
    res.fold[static_cast<std::size_t>(perm[r])] = static_cast<int>(r % static_cast<std::size_t>(folds));

  res.w.resize(n);
  parallel_for(static_cast<std::size_t>(folds), default_threads(), [&](std::size_t kf) {
    const int k = static_cast<int>(kf);
    std::vector<Eigen::Index> in_fold, out_fold;
    for (Eigen::Index i = 0; i < n; ++i)
      (res.fold[static_cast<std::size_t>(i)] == k ? in_fold : out_fold).push_back(i);
    const Dataset train = data.rows(out_fold);
    const Dataset eval = data.rows(in_fold);
    NuisanceFit nf;
    try {
      nf = fit_nuisances(train, u, g, cfg);
    } catch (const std::exception& e) {
      throw NumericError("crossfit_scores: nuisance fit failed on complement of fold " +
                         std::to_string(k) + ": " + e.what());
    }
    const Eigen::VectorXd w_k = evaluate_signals(nf, eval, cfg);
    for (std::size_t r = 0; r < in_fold.size(); ++r)
      res.w[in_fold[r]] = w_k[static_cast<Eigen::Index>(r)];
  });
  res.theta_crossfit = res.w.mean();
  return res;
}

// V_hat(pi) = (1/n) sum pi(X_i) w_i with its analytic SE.
inline std::pair<double, double> welfare(const Eigen::VectorXd& w,
                                         const std::vector<int>& cell,
                                         std::uint32_t rule_mask) {
  const auto n = w.size();
  Eigen::VectorXd s(n);
  for (Eigen::Index i = 0; i < n; ++i)
    s[i] = ((rule_mask >> cell[static_cast<std::size_t>(i)]) & 1u) ? w[i] : 0.0;
  const double v = s.mean();
  const double se = sd_pop(Eigen::VectorXd(s.array() - v)) / std::sqrt(static_cast<double>(n));
  return {v, se};
}

struct EwmSelection {
  std::uint32_t rule = 0;                  // majority vote across folds
  std::vector<std::uint32_t> fold_rules;   // per-fold argmax
};

// Per-fold EWM: exhaustive argmax over all rules of
// sum_{i in fold} (2 pi(X_i) - 1) w_i. Ties break toward treating fewer
// cells, then toward the lexicographically smaller rule vector. The final
// rule averages the per-fold selections as a cell-wise majority vote, with
// ties resolved to no treatment.
inline EwmSelection ewm_select(const Eigen::VectorXd& w, const std::vector<int>& fold,
                               int folds, const std::vector<int>& cell, int n_cells) {
  EwmSelection sel;
  const auto n = w.size();
  std::vector<int> treat_votes(static_cast<std::size_t>(n_cells), 0);

  for (int k = 0; k < folds; ++k) {
    std::vector<double> cell_sum(static_cast<std::size_t>(n_cells), 0.0);
    for (Eigen::Index i = 0; i < n; ++i)
      if (fold[static_cast<std::size_t>(i)] == k)
        cell_sum[static_cast<std::size_t>(cell[static_cast<std::size_t>(i)])] += w[i];

    const std::uint32_t n_rules = 1u << n_cells;
    std::uint32_t best = 0;
    double best_obj = -std::numeric_limits<double>::infinity();
    for (std::uint32_t mask = 0; mask < n_rules; ++mask) {
      double obj = 0.0;
      for (int c = 0; c < n_cells; ++c)
        obj += (((mask >> c) & 1u) ? 1.0 : -1.0) * cell_sum[static_cast<std::size_t>(c)];
      if (obj > best_obj + 1e-15) {
        best_obj = obj;
        best = mask;
      } else if (obj >= best_obj - 1e-15) {
        const int pc_new = std::popcount(mask), pc_old = std::popcount(best);
        if (pc_new < pc_old || (pc_new == pc_old && mask < best)) best = mask;
      }
    }
    sel.fold_rules.push_back(best);
    for (int c = 0; c < n_cells; ++c)
      if ((best >> c) & 1u) ++treat_votes[static_cast<std::size_t>(c)];
  }

  sel.rule = 0;
  for (int c = 0; c < n_cells; ++c)
    if (2 * treat_votes[static_cast<std::size_t>(c)] > folds) sel.rule |= 1u << c;
  return sel;
}

struct WelfareRuleEntry {
  std::uint32_t mask = 0;
  std::vector<int> rule;  // display order
  double gain = 0.0;
  double se_analytic = 0.0;
  double se_bootstrap = 0.0;
};

struct WelfareReport {
  std::vector<WelfareRuleEntry> rules;
  std::uint32_t selected_mask = 0;
  std::vector<int> selected_rule;
  std::vector<std::uint32_t> fold_rules;
  std::vector<int> fold;  // fold assignment per observation
  double theta_crossfit = 0.0;
  double baseline_gain = 0.0;  // treat everyone
  int folds = 0;
};

inline double multiplier_bootstrap_se(const Eigen::VectorXd& s, int draws,
                                      std::uint64_t seed, std::uint64_t stream_id) {
  const auto n = s.size();
  const double sbar = s.mean();
  Eigen::VectorXd boot(draws);
  for (int b = 0; b < draws; ++b) {
    Rng rng(seed, stream_id, static_cast<std::uint64_t>(b));
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) acc += rng.normal() * (s[i] - sbar);
    boot[b] = acc / static_cast<double>(n);
  }
  return sd_pop(boot);
}

// Full EWM run: cross-fitted signals, the welfare table over the enumerated
// rule class, and the selected rule.
inline WelfareReport run_policy(const Dataset& data, const IndexU& u,
                                const Intervention& g, const PolicyClass& pc, int folds,
                                int bootstrap_draws, std::uint64_t seed,
                                const EstimatorConfig& cfg = {}) {
  pc.validate();
  const CrossfitResult cf = crossfit_scores(data, u, g, folds, seed, cfg);
  const std::vector<int> cell = assign_cells(data, pc);

  WelfareReport rep;
  rep.fold = cf.fold;
  rep.folds = folds;
  rep.theta_crossfit = cf.theta_crossfit;

  const int n_cells = pc.n_cells();
  const std::uint32_t n_rules = pc.n_rules();
  for (std::uint32_t mask = 0; mask < n_rules; ++mask) {
    WelfareRuleEntry e;
    e.mask = mask;
    e.rule = rule_vector(mask, n_cells);
    const auto [v, se] = welfare(cf.w, cell, mask);
    e.gain = v;
    e.se_analytic = se;
    if (bootstrap_draws > 0) {
      Eigen::VectorXd s(data.n());
      for (Eigen::Index i = 0; i < data.n(); ++i)
        s[i] = ((mask >> cell[static_cast<std::size_t>(i)]) & 1u) ? cf.w[i] : 0.0;
      e.se_bootstrap = multiplier_bootstrap_se(s, bootstrap_draws, seed, 1000 + mask);
    }
    rep.rules.push_back(std::move(e));
  }
  rep.baseline_gain = rep.rules.back().gain;  // all-ones mask is the last rule

  const EwmSelection sel = ewm_select(cf.w, cf.fold, folds, cell, n_cells);
  rep.selected_mask = sel.rule;
  rep.selected_rule = rule_vector(sel.rule, n_cells);
  rep.fold_rules = sel.fold_rules;
  return rep;
}

}  // namespace ocppe
