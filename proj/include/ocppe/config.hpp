#pragma once

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ocppe/inference.hpp"
#include "ocppe/intervention.hpp"
#include "ocppe/policy.hpp"
#include "ocppe/score.hpp"
#include "ocppe/simulation.hpp"

namespace ocppe {

using cjson = nlohmann::json;

namespace cfgdetail {

inline void expect_keys(const cjson& j, const std::set<std::string>& allowed,
                        const std::string& section) {
  if (!j.is_object()) throw ConfigError("config: '" + section + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("config: unknown key '" + it.key() + "' in " + section);
}

inline double as_number(const cjson& j, const std::string& key) {
  if (!j.is_number()) throw ConfigError("config: '" + key + "' must be a number");
  return j.get<double>();
}

inline int as_int(const cjson& j, const std::string& key) {
  if (!j.is_number_integer()) throw ConfigError("config: '" + key + "' must be an integer");
  return j.get<int>();
}

inline bool as_bool(const cjson& j, const std::string& key) {
  if (!j.is_boolean()) throw ConfigError("config: '" + key + "' must be a boolean");
  return j.get<bool>();
}

inline std::string as_string(const cjson& j, const std::string& key) {
  if (!j.is_string()) throw ConfigError("config: '" + key + "' must be a string");
  return j.get<std::string>();
}

inline std::vector<double> as_vector(const cjson& j, const std::string& key) {
  if (!j.is_array()) throw ConfigError("config: '" + key + "' must be an array");
  std::vector<double> out;
  for (const auto& v : j) out.push_back(as_number(v, key));
  return out;
}

inline std::vector<std::pair<double, double>> as_pairs(const cjson& j,
                                                       const std::string& key) {
  if (!j.is_array()) throw ConfigError("config: '" + key + "' must be an array of pairs");
  std::vector<std::pair<double, double>> out;
  for (const auto& v : j) {
    if (!v.is_array() || v.size() != 2)
      throw ConfigError("config: entries of '" + key + "' must be 2-element arrays");
    out.emplace_back(as_number(v[0], key), as_number(v[1], key));
  }
  return out;
}

}  // namespace cfgdetail

// Intervention section kept symbolic until data is available (mu: "mean"
// needs the sample).
struct InterventionSpec {
  std::string kind = "location-shift";
  double step = 1.0;
  double rate = 1.0;
  double mu = 0.0;
  bool mu_is_mean = false;
  double sigma1 = 1.0, sigma2 = 0.0;
  std::string target_expr;  // target-perturbation g0
  std::string g_expr;       // covariate-dependent G
  TargetCdf target_cdf;
  std::vector<double> sigma;  // binds the family parameter when present

  bool is_distributional() const { return kind == "distributional"; }

  Intervention resolve(const Dataset& data) const {
    Intervention g = resolve_family(data);
    if (!sigma.empty()) g = g.with_sigma(sigma);
    return g;
  }

  // The family with its fixed parameters; sigma left unbound.
  Intervention resolve_family(const Dataset& data) const {
    if (kind == "location-shift") return Intervention::location_shift(step);
    if (kind == "scale") return Intervention::scale(rate);
    if (kind == "location-scale") {
      const double m = mu_is_mean ? data.d.mean() : mu;
      return Intervention::location_scale(m, sigma1, sigma2);
    }
    if (kind == "target-perturbation") {
      if (target_expr.empty())
        throw ConfigError("config: target-perturbation needs 'target'");
      return Intervention::target_perturbation(target_expr);
    }
    if (kind == "covariate-dependent") {
      if (g_expr.empty()) throw ConfigError("config: covariate-dependent needs 'g'");
      return Intervention::covariate_dependent(g_expr);
    }
    if (kind == "distributional") return Intervention::distributional(target_cdf);
    throw ConfigError("config: unknown intervention kind '" + kind + "'");
  }
};

struct TestSpec {
  std::string kind;
  double a = 0.2;
  double grid_step = 0.1;
  std::vector<double> sigma_grid;
  double sigma_star = 0.0;
  double tau1 = 0.0, tau2 = 0.0;
};

struct PolicySpec {
  int folds = 5;
  std::vector<FeatureDef> features;
  int bootstrap_draws = 200;
  double tau1 = 0.0, tau2 = 0.0;
};

struct SimulateSpec {
  Eigen::Index n = 500;
  int p_x = 30;
  int reps = 100;
  std::vector<std::pair<double, double>> designs = {{0.2, 0.2}};
  std::vector<std::pair<double, double>> ranges = {{0.2, 0.3}};
  Eigen::Index oracle_draws = 1000000;
  bool bias_ratio_of_means = true;
};

struct RunConfig {
  std::string input;
  std::string output_dir = ".";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
  InterventionSpec intervention;
  bool intervention_set = false;
  std::vector<std::pair<double, double>> tau_pairs;
  EstimatorConfig estimator;
  BootstrapConfig bootstrap;
  bool dump_draws = false;
  bool dump_nuisance = false;
  TestSpec test;
  PolicySpec policy;
  SimulateSpec simulate;
};

namespace cfgdetail {

inline void parse_intervention(const cjson& j, InterventionSpec& out) {
  expect_keys(j,
              {"kind", "step", "rate", "mu", "sigma1", "sigma2", "target", "g",
               "target_cdf", "sigma"},
              "intervention");
  if (j.contains("kind")) out.kind = as_string(j["kind"], "intervention.kind");
  if (j.contains("step")) out.step = as_number(j["step"], "intervention.step");
  if (j.contains("rate")) out.rate = as_number(j["rate"], "intervention.rate");
  if (j.contains("mu")) {
    if (j["mu"].is_string()) {
      if (j["mu"].get<std::string>() != "mean")
        throw ConfigError("config: intervention.mu must be a number or \"mean\"");
      out.mu_is_mean = true;
    } else {
      out.mu = as_number(j["mu"], "intervention.mu");
    }
  }
  if (j.contains("sigma1")) out.sigma1 = as_number(j["sigma1"], "intervention.sigma1");
  if (j.contains("sigma2")) out.sigma2 = as_number(j["sigma2"], "intervention.sigma2");
  if (j.contains("target")) out.target_expr = as_string(j["target"], "intervention.target");
  if (j.contains("g")) out.g_expr = as_string(j["g"], "intervention.g");
  if (j.contains("sigma")) out.sigma = as_vector(j["sigma"], "intervention.sigma");
  if (j.contains("target_cdf")) {
    const auto& t = j["target_cdf"];
    expect_keys(t, {"family", "mean", "sd", "lo", "hi", "table"}, "intervention.target_cdf");
    const std::string fam = t.contains("family") ? as_string(t["family"], "family") : "normal";
    if (fam == "normal") {
      out.target_cdf.family = TargetCdf::Family::Normal;
      if (t.contains("mean")) out.target_cdf.mean = as_number(t["mean"], "mean");
      if (t.contains("sd")) out.target_cdf.sd = as_number(t["sd"], "sd");
    } else if (fam == "uniform") {
      out.target_cdf.family = TargetCdf::Family::Uniform;
      if (t.contains("lo")) out.target_cdf.lo = as_number(t["lo"], "lo");
      if (t.contains("hi")) out.target_cdf.hi = as_number(t["hi"], "hi");
    } else if (fam == "table") {
      out.target_cdf.family = TargetCdf::Family::Table;
      if (!t.contains("table")) throw ConfigError("config: table CDF needs 'table'");
      for (const auto& row : t["table"]) {
        if (!row.is_array() || row.size() != 2)
          throw ConfigError("config: target_cdf.table rows must be [t, p] pairs");
        out.target_cdf.table.emplace_back(as_number(row[0], "table"),
                                          as_number(row[1], "table"));
      }
    } else {
      throw ConfigError("config: unknown target_cdf family '" + fam + "'");
    }
  }
}

inline void parse_basis(const cjson& j, BasisSpec& out) {
  expect_keys(j, {"degree", "interactions", "drop_collinear"}, "basis");
  if (j.contains("degree")) out.degree = as_int(j["degree"], "basis.degree");
  if (j.contains("interactions"))
    out.include_interactions = as_bool(j["interactions"], "basis.interactions");
  if (j.contains("drop_collinear"))
    out.drop_collinear = as_bool(j["drop_collinear"], "basis.drop_collinear");
  out.validate();
}

inline void parse_estimator(const cjson& j, EstimatorConfig& out) {
  expect_keys(j,
              {"grid_points", "loading_rounds", "link", "kernel", "bandwidth",
               "lambda_beta", "lambda_gamma", "riesz_a", "riesz_post_lasso",
               "max_sweeps", "kkt_tol", "center_treatment"},
              "estimator");
  if (j.contains("grid_points"))
    out.dr.grid_points = as_int(j["grid_points"], "estimator.grid_points");
  if (j.contains("loading_rounds"))
    out.dr.loading_rounds = as_int(j["loading_rounds"], "estimator.loading_rounds");
  if (j.contains("link")) {
    const std::string link = as_string(j["link"], "estimator.link");
    if (link == "logistic") out.dr.link = LinkKind::Logistic;
    else if (link == "probit") out.dr.link = LinkKind::Probit;
    else throw ConfigError("config: estimator.link must be logistic or probit");
  }
  if (j.contains("kernel")) {
    const std::string kernel = as_string(j["kernel"], "estimator.kernel");
    if (kernel == "gaussian") out.density.kernel = Kernel::Gaussian;
    else if (kernel == "epanechnikov") out.density.kernel = Kernel::Epanechnikov;
    else throw ConfigError("config: estimator.kernel must be gaussian or epanechnikov");
  }
  if (j.contains("bandwidth")) {
    const auto& b = j["bandwidth"];
    expect_keys(b, {"constant", "exponent", "override"}, "estimator.bandwidth");
    if (b.contains("constant"))
      out.density.bandwidth_constant = as_number(b["constant"], "bandwidth.constant");
    if (b.contains("exponent"))
      out.density.bandwidth_exponent = as_number(b["exponent"], "bandwidth.exponent");
    if (b.contains("override"))
      out.density.bandwidth_override = as_number(b["override"], "bandwidth.override");
    out.density.validate();
  }
  if (j.contains("lambda_beta"))
    out.dr.lambda_override = as_number(j["lambda_beta"], "estimator.lambda_beta");
  if (j.contains("lambda_gamma"))
    out.lambda_gamma_override = as_number(j["lambda_gamma"], "estimator.lambda_gamma");
  if (j.contains("riesz_a")) out.riesz_a = as_number(j["riesz_a"], "estimator.riesz_a");
  if (j.contains("riesz_post_lasso"))
    out.riesz.post_lasso = as_bool(j["riesz_post_lasso"], "estimator.riesz_post_lasso");
  if (j.contains("max_sweeps"))
    out.dr.max_sweeps = as_int(j["max_sweeps"], "estimator.max_sweeps");
  if (j.contains("kkt_tol")) out.dr.kkt_tol = as_number(j["kkt_tol"], "estimator.kkt_tol");
  if (j.contains("center_treatment"))
    out.center_treatment = as_bool(j["center_treatment"], "estimator.center_treatment");
  out.dr.validate();
}

inline void parse_bootstrap(const cjson& j, BootstrapConfig& out, bool& dump) {
  expect_keys(j, {"draws", "weights", "dump_draws"}, "bootstrap");
  if (j.contains("draws")) out.draws = as_int(j["draws"], "bootstrap.draws");
  if (j.contains("weights")) {
    const std::string w = as_string(j["weights"], "bootstrap.weights");
    if (w == "normal") out.weights = MultiplierWeights::Normal;
    else if (w == "rademacher") out.weights = MultiplierWeights::Rademacher;
    else if (w == "mammen") out.weights = MultiplierWeights::Mammen;
    else throw ConfigError("config: bootstrap.weights must be normal, rademacher or mammen");
  }
  if (j.contains("dump_draws")) dump = as_bool(j["dump_draws"], "bootstrap.dump_draws");
}

inline void parse_test(const cjson& j, TestSpec& out) {
  expect_keys(j, {"kind", "a", "grid_step", "sigma_grid", "sigma_star", "tau1", "tau2"},
              "test");
  if (!j.contains("kind")) throw ConfigError("config: missing required key 'test.kind'");
  out.kind = as_string(j["kind"], "test.kind");
  if (j.contains("a")) out.a = as_number(j["a"], "test.a");
  if (j.contains("grid_step")) out.grid_step = as_number(j["grid_step"], "test.grid_step");
  if (j.contains("sigma_grid")) out.sigma_grid = as_vector(j["sigma_grid"], "test.sigma_grid");
  if (j.contains("sigma_star")) out.sigma_star = as_number(j["sigma_star"], "test.sigma_star");
  if (j.contains("tau1")) out.tau1 = as_number(j["tau1"], "test.tau1");
  if (j.contains("tau2")) out.tau2 = as_number(j["tau2"], "test.tau2");
}

inline void parse_policy(const cjson& j, PolicySpec& out) {
  expect_keys(j, {"folds", "features", "bootstrap_draws", "tau1", "tau2"}, "policy");
  if (j.contains("folds")) out.folds = as_int(j["folds"], "policy.folds");
  if (j.contains("bootstrap_draws"))
    out.bootstrap_draws = as_int(j["bootstrap_draws"], "policy.bootstrap_draws");
  if (!j.contains("tau1") || !j.contains("tau2"))
    throw ConfigError("config: policy needs 'tau1' and 'tau2'");
  out.tau1 = as_number(j["tau1"], "policy.tau1");
  out.tau2 = as_number(j["tau2"], "policy.tau2");
  if (!j.contains("features"))
    throw ConfigError("config: missing required key 'policy.features'");
  for (const auto& f : j["features"]) {
    expect_keys(f, {"column", "op", "threshold"}, "policy.features[]");
    FeatureDef def;
    if (!f.contains("column"))
      throw ConfigError("config: policy feature needs 'column'");
    def.column = as_string(f["column"], "feature.column");
    if (f.contains("op")) {
      const std::string op = as_string(f["op"], "feature.op");
      if (op == "eq") def.op = FeatureDef::Op::Eq;
      else if (op == "gt") def.op = FeatureDef::Op::Gt;
      else if (op == "ge") def.op = FeatureDef::Op::Ge;
      else throw ConfigError("config: feature.op must be eq, gt or ge");
    }
    if (f.contains("threshold")) def.threshold = as_number(f["threshold"], "feature.threshold");
    out.features.push_back(std::move(def));
  }
}

inline void parse_simulate(const cjson& j, SimulateSpec& out) {
  expect_keys(j, {"n", "p_x", "reps", "designs", "ranges", "oracle_draws", "bias_ratio"},
              "simulate");
  if (j.contains("n")) out.n = as_int(j["n"], "simulate.n");
  if (j.contains("p_x")) out.p_x = as_int(j["p_x"], "simulate.p_x");
  if (j.contains("reps")) out.reps = as_int(j["reps"], "simulate.reps");
  if (j.contains("designs")) out.designs = as_pairs(j["designs"], "simulate.designs");
  if (j.contains("ranges")) out.ranges = as_pairs(j["ranges"], "simulate.ranges");
  if (j.contains("oracle_draws"))
    out.oracle_draws = as_int(j["oracle_draws"], "simulate.oracle_draws");
  if (j.contains("bias_ratio")) {
    const std::string b = as_string(j["bias_ratio"], "simulate.bias_ratio");
    if (b == "ratio-of-means") out.bias_ratio_of_means = true;
    else if (b == "mean-of-ratios") out.bias_ratio_of_means = false;
    else throw ConfigError("config: simulate.bias_ratio must be ratio-of-means or mean-of-ratios");
  }
}

}  // namespace cfgdetail

inline RunConfig parse_config(const cjson& j) {
  using namespace cfgdetail;
  expect_keys(j,
              {"input", "output_dir", "seed", "threads", "intervention", "index",
               "basis", "estimator", "bootstrap", "test", "policy", "simulate",
               "dump_nuisance"},
              "config");
  RunConfig cfg;
  if (j.contains("input")) cfg.input = as_string(j["input"], "input");
  if (j.contains("output_dir")) cfg.output_dir = as_string(j["output_dir"], "output_dir");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_integer())
      throw ConfigError("config: 'seed' must be an integer");
    cfg.seed = j["seed"].get<std::uint64_t>();
    cfg.seed_set = true;
  }
  if (j.contains("threads")) cfg.threads = as_int(j["threads"], "threads");
  if (j.contains("intervention")) {
    parse_intervention(j["intervention"], cfg.intervention);
    cfg.intervention_set = true;
  }
  if (j.contains("index")) {
    const auto& idx = j["index"];
    expect_keys(idx, {"tau_pairs", "tau1", "tau2"}, "index");
    if (idx.contains("tau_pairs")) cfg.tau_pairs = as_pairs(idx["tau_pairs"], "index.tau_pairs");
    if (idx.contains("tau1") && idx.contains("tau2"))
      cfg.tau_pairs.emplace_back(as_number(idx["tau1"], "index.tau1"),
                                 as_number(idx["tau2"], "index.tau2"));
  }
  if (j.contains("basis")) parse_basis(j["basis"], cfg.estimator.basis);
  if (j.contains("estimator")) parse_estimator(j["estimator"], cfg.estimator);
  if (j.contains("bootstrap")) parse_bootstrap(j["bootstrap"], cfg.bootstrap, cfg.dump_draws);
  if (j.contains("test")) parse_test(j["test"], cfg.test);
  if (j.contains("policy")) parse_policy(j["policy"], cfg.policy);
  if (j.contains("simulate")) parse_simulate(j["simulate"], cfg.simulate);
  if (j.contains("dump_nuisance"))
    cfg.dump_nuisance = as_bool(j["dump_nuisance"], "dump_nuisance");
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  cjson j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return parse_config(j);
}

}  // namespace ocppe
