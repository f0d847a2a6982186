#pragma once

#include <cstdio>
#include <string>

#include <json.hpp>

#include "ocppe/csv.hpp"
#include "ocppe/dist_regression.hpp"
#include "ocppe/inference.hpp"
#include "ocppe/policy.hpp"
#include "ocppe/riesz.hpp"
#include "ocppe/score.hpp"
#include "ocppe/simulation.hpp"

namespace ocppe {

using ojson = nlohmann::ordered_json;

namespace detail {

inline void json_escape_into(const std::string& s, std::string& out) {
  out.push_back('"');
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out.push_back(c);
        }
    }
  }
  out.push_back('"');
}

inline void dump17_into(const ojson& j, std::string& out, int indent) {
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  const std::string pad_in(static_cast<std::size_t>(indent + 1) * 2, ' ');
  switch (j.type()) {
    case ojson::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad_in;
        json_escape_into(it.key(), out);
        out += ": ";
        dump17_into(it.value(), out, indent + 1);
      }
      out += "\n" + pad + "}";
      return;
    }
    case ojson::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += "[\n";
      bool first = true;
      for (const auto& v : j) {
        if (!first) out += ",\n";
        first = false;
        out += pad_in;
        dump17_into(v, out, indent + 1);
      }
      out += "\n" + pad + "]";
      return;
    }
    case ojson::value_t::string:
      json_escape_into(j.get<std::string>(), out);
      return;
    case ojson::value_t::boolean:
      out += j.get<bool>() ? "true" : "false";
      return;
    case ojson::value_t::number_integer:
      out += std::to_string(j.get<long long>());
      return;
    case ojson::value_t::number_unsigned:
      out += std::to_string(j.get<unsigned long long>());
      return;
    case ojson::value_t::number_float:
      out += format_double(j.get<double>());
      return;
    default:
      out += "null";
      return;
  }
}

}  // namespace detail

// JSON serialization with doubles at 17 significant digits so reruns can be
// compared byte for byte.
inline std::string dump_json17(const ojson& j) {
  std::string out;
  detail::dump17_into(j, out, 0);
  out += "\n";
  return out;
}

inline ojson json_of(const IndexU& u) {
  ojson j;
  j["tau1"] = u.tau1;
  j["tau2"] = u.tau2;
  j["sigma"] = u.sigma;
  return j;
}

inline ojson json_of(const OcppeDiagnostics& d) {
  ojson j;
  j["dr_support_total"] = static_cast<long long>(d.dr_support_total);
  j["dr_degenerate_points"] = d.dr_degenerate_points;
  j["dr_separation_fallbacks"] = d.dr_separation_fallbacks;
  j["riesz_support"] = static_cast<long long>(d.riesz_support);
  j["riesz_sweeps"] = d.riesz_sweeps;
  j["trimmed"] = static_cast<long long>(d.trimmed);
  j["flags"] = d.flags;
  return j;
}

inline ojson json_of(const OcppeResult& r) {
  ojson j;
  j["tau1"] = r.index.tau1;
  j["tau2"] = r.index.tau2;
  j["sigma"] = r.index.sigma;
  j["estimator"] = r.estimator;
  j["theta_hat"] = r.theta_hat;
  j["se_analytic"] = r.se_analytic;
  j["ci95"] = ojson::array({r.ci_lo, r.ci_hi});
  j["n"] = static_cast<long long>(r.n);
  j["flags"] = r.diag.flags;
  j["diagnostics"] = json_of(r.diag);
  return j;
}

inline ojson json_of(const DRGridFit& fit) {
  ojson j;
  j["link"] = fit.link == LinkKind::Logistic ? "logistic" : "probit";
  j["tau1"] = fit.tau1;
  j["tau2"] = fit.tau2;
  j["q1"] = fit.q1;
  j["q2"] = fit.q2;
  j["dy"] = fit.dy;
  j["lambda_beta"] = fit.lambda_beta;
  ojson grid = ojson::array();
  for (const auto& pt : fit.points) {
    ojson p;
    p["y"] = pt.y;
    p["degenerate"] = pt.degenerate;
    if (pt.degenerate) {
      p["value"] = pt.degenerate_value;
    } else {
      ojson support = ojson::array();
      for (auto s : pt.support) support.push_back(static_cast<long long>(s));
      p["support"] = support;
      p["intercept"] = pt.intercept;
      p["coef"] = std::vector<double>(pt.coef.data(), pt.coef.data() + pt.coef.size());
      p["lasso_intercept"] = pt.lasso_intercept;
      p["lasso_coef"] = std::vector<double>(pt.lasso_coef.data(),
                                            pt.lasso_coef.data() + pt.lasso_coef.size());
      p["loadings"] = std::vector<double>(pt.loadings.data(),
                                          pt.loadings.data() + pt.loadings.size());
      p["separation_fallback"] = pt.separation_fallback;
    }
    grid.push_back(std::move(p));
  }
  j["grid"] = std::move(grid);
  return j;
}

inline ojson json_of(const RieszFit& fit) {
  ojson j;
  j["lambda_gamma"] = fit.lambda_gamma;
  j["sigma"] = fit.sigma;
  ojson support = ojson::array();
  std::vector<double> coef, coef_lasso;
  for (auto s : fit.support) {
    support.push_back(static_cast<long long>(s));
    coef.push_back(fit.gamma[s]);
    coef_lasso.push_back(fit.gamma_lasso[s]);
  }
  j["support"] = support;
  j["coef"] = coef;
  j["coef_lasso"] = coef_lasso;
  j["refit_fallback"] = fit.refit_fallback;
  return j;
}

inline ojson json_of(const TestReport& rep) {
  ojson j;
  j["kind"] = rep.kind;
  j["statistic"] = rep.statistic;
  j["critical_value_95"] = rep.critical_value_95;
  j["p_value"] = rep.p_value;
  j["reject_at_5pct"] = rep.statistic > rep.critical_value_95;
  j["bootstrap_draws"] = rep.b;
  ojson grid = ojson::array();
  for (std::size_t k = 0; k < rep.grid.size(); ++k) {
    ojson g = json_of(rep.grid[k]);
    g["theta_hat"] = rep.theta[k];
    grid.push_back(std::move(g));
  }
  j["grid"] = std::move(grid);
  return j;
}

inline ojson json_of(const WelfareReport& rep) {
  ojson j;
  j["folds"] = rep.folds;
  j["theta_crossfit"] = rep.theta_crossfit;
  j["baseline_gain"] = rep.baseline_gain;
  j["selected_rule"] = rep.selected_rule;
  ojson fold_rules = ojson::array();
  for (auto m : rep.fold_rules) {
    const int n_cells = static_cast<int>(rep.selected_rule.size());
    fold_rules.push_back(rule_vector(m, n_cells));
  }
  j["fold_rules"] = std::move(fold_rules);
  ojson rules = ojson::array();
  for (const auto& e : rep.rules) {
    ojson r;
    r["rule"] = e.rule;
    r["gain"] = e.gain;
    r["se_analytic"] = e.se_analytic;
    r["se_bootstrap"] = e.se_bootstrap;
    rules.push_back(std::move(r));
  }
  j["rules"] = std::move(rules);
  j["fold_assignment"] = rep.fold;
  return j;
}

inline std::string study_csv(const StudyReport& report) {
  CsvWriter w;
  for (const auto& h : {"r_d2", "r_y2", "tau1", "tau2", "estimator", "theta_true",
                        "bias_ratio", "std", "mse", "coverage", "reps", "failures",
                        "flagged"})
    w.field(std::string(h));
  w.end_row();
  for (const auto& c : report.cells) {
    w.field(c.r_d2);
    w.field(c.r_y2);
    w.field(c.tau1);
    w.field(c.tau2);
    w.field(c.estimator);
    w.field(c.theta_true);
    w.field(c.bias_ratio);
    w.field(c.std_dev);
    w.field(c.mse);
    w.field(c.coverage);
    w.field(c.reps);
    w.field(c.failures);
    w.field(std::string(c.flagged ? "yes" : "no"));
    w.end_row();
  }
  return w.str();
}

// Text table in the layout of the simulation tables: one block per design,
// one row per quantile range with naive/DML columns for each metric.
inline std::string study_table(const StudyReport& report) {
  std::string out;
  auto cell_at = [&](double rd, double ry, double t1, double t2,
                     const std::string& est) -> const StudyCell* {
    for (const auto& c : report.cells)
      if (c.r_d2 == rd && c.r_y2 == ry && c.tau1 == t1 && c.tau2 == t2 &&
          c.estimator == est)
        return &c;
    return nullptr;
  };
  std::vector<std::pair<double, double>> designs, ranges;
  for (const auto& c : report.cells) {
    if (std::find(designs.begin(), designs.end(), std::make_pair(c.r_d2, c.r_y2)) ==
        designs.end())
      designs.emplace_back(c.r_d2, c.r_y2);
    if (std::find(ranges.begin(), ranges.end(), std::make_pair(c.tau1, c.tau2)) ==
        ranges.end())
      ranges.emplace_back(c.tau1, c.tau2);
  }
  char buf[256];
  for (const auto& [rd, ry] : designs) {
    std::snprintf(buf, sizeof(buf), "Design R_d^2 = %.2f, R_y^2 = %.2f\n", rd, ry);
    out += buf;
    out +=
        "  Quantile   | Bias Ratio        | Std               | MSE               | "
        "Cvg\n";
    out +=
        "             | Naive     DML     | Naive     DML     | Naive     DML     | "
        "Naive   DML\n";
    for (const auto& [t1, t2] : ranges) {
      const StudyCell* nv = cell_at(rd, ry, t1, t2, "naive");
      const StudyCell* dm = cell_at(rd, ry, t1, t2, "dml");
      auto f = [](const StudyCell* c, double StudyCell::*m) {
        return c ? c->*m : std::numeric_limits<double>::quiet_NaN();
      };
      std::snprintf(buf, sizeof(buf),
                    "  %.2f-%.2f  | %8.3f %8.3f | %8.3f %8.3f | %8.3f %8.3f | %6.3f "
                    "%6.3f\n",
                    t1, t2, f(nv, &StudyCell::bias_ratio), f(dm, &StudyCell::bias_ratio),
                    f(nv, &StudyCell::std_dev), f(dm, &StudyCell::std_dev),
                    f(nv, &StudyCell::mse), f(dm, &StudyCell::mse),
                    f(nv, &StudyCell::coverage), f(dm, &StudyCell::coverage));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

inline std::string draws_csv(const Eigen::MatrixXd& draws) {
  CsvWriter w;
  for (Eigen::Index k = 0; k < draws.cols(); ++k) w.field("u" + std::to_string(k));
  w.end_row();
  for (Eigen::Index b = 0; b < draws.rows(); ++b) {
    for (Eigen::Index k = 0; k < draws.cols(); ++k) w.field(draws(b, k));
    w.end_row();
  }
  return w.str();
}

}  // namespace ocppe
