#pragma once

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ocppe/config.hpp"
#include "ocppe/csv.hpp"
#include "ocppe/parallel.hpp"
#include "ocppe/serialize.hpp"

namespace ocppe::cli {

namespace detail {

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline constexpr const char* kDefaultsVersion = "1";

struct Outputs {
  std::filesystem::path dir;
  std::vector<std::string> files;

  void write(const std::string& name, const std::string& content) {
    std::filesystem::create_directories(dir);
    write_file((dir / name).string(), content);
    files.push_back(name);
  }
};

// The manifest pins everything needed to reproduce the run byte for byte:
// config hash, seed, thread count and the defaults version.
inline void write_manifest(Outputs& out, const std::string& command,
                           const std::string& config_blob, const RunConfig& cfg) {
  ojson m;
  m["command"] = command;
  std::uint64_t h = fnv1a(config_blob);
  h = fnv1a(std::to_string(cfg.seed), h);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  m["config_hash"] = std::string(buf);
  m["seed"] = static_cast<unsigned long long>(cfg.seed);
  m["defaults_version"] = kDefaultsVersion;
  m["outputs"] = out.files;
  std::filesystem::create_directories(out.dir);
  write_file((out.dir / "manifest.json").string(), dump_json17(m));
}

inline void require_seed(const RunConfig& cfg, const std::string& command) {
  if (!cfg.seed_set)
    throw ConfigError("config: missing required key 'seed' (mandatory for " + command + ")");
}

inline std::vector<IndexU> indices_of(const RunConfig& cfg) {
  if (cfg.tau_pairs.empty())
    throw ConfigError("config: missing required key 'index' (tau_pairs or tau1/tau2)");
  std::vector<IndexU> out;
  for (const auto& [t1, t2] : cfg.tau_pairs)
    out.emplace_back(t1, t2, cfg.intervention.sigma);
  return out;
}

inline int cmd_estimate(const RunConfig& cfg, const std::string& config_blob) {
  if (cfg.input.empty()) throw ConfigError("config: missing required key 'input'");
  const Dataset data = read_dataset(cfg.input);
  const auto indices = indices_of(cfg);

  Outputs out{cfg.output_dir, {}};
  CsvWriter table;
  for (const auto& h : {"tau1", "tau2", "sigma", "theta", "se", "lo", "hi"})
    table.field(std::string(h));
  table.end_row();

  // indices run independently in parallel; files are written afterwards in
  // index order so output bytes never depend on scheduling
  std::vector<OcppeResult> results(indices.size());
  std::vector<std::string> nuisance_blobs(indices.size());
  const int threads = cfg.threads > 0 ? cfg.threads : default_threads();
  parallel_for(indices.size(), threads, [&](std::size_t k) {
    const IndexU& u = indices[k];
    if (cfg.intervention.is_distributional()) {
      results[k] =
          dist_perturbation_estimate(data, u, cfg.intervention.target_cdf, cfg.estimator);
    } else {
      const Intervention g = cfg.intervention.resolve(data);
      const NuisanceFit nf = fit_nuisances(data, u, g, cfg.estimator);
      const Eigen::VectorXd w = evaluate_signals(nf, data, cfg.estimator);
      results[k] = ocppe::detail::result_from_signals(w, u, "dml");
      results[k].diag = nf.diag;
      if (cfg.dump_nuisance) {
        ojson nj;
        nj["dist_regression"] = json_of(nf.dr);
        nj["riesz"] = json_of(nf.riesz);
        nuisance_blobs[k] = dump_json17(nj);
      }
    }
  });

  for (std::size_t k = 0; k < indices.size(); ++k) {
    const IndexU& u = indices[k];
    const OcppeResult& res = results[k];
    if (!nuisance_blobs[k].empty())
      out.write("nuisance_" + std::to_string(k) + ".json", nuisance_blobs[k]);
    out.write("ocppe_" + std::to_string(k) + ".json", dump_json17(json_of(res)));

    table.field(u.tau1);
    table.field(u.tau2);
    std::string sigma_str;
    for (std::size_t s = 0; s < u.sigma.size(); ++s) {
      if (s) sigma_str += ";";
      sigma_str += format_double(u.sigma[s]);
    }
    table.field(sigma_str);
    table.field(res.theta_hat);
    table.field(res.se_analytic);
    table.field(res.ci_lo);
    table.field(res.ci_hi);
    table.end_row();
  }
  out.write("estimates.csv", table.str());
  write_manifest(out, "estimate", config_blob, cfg);
  return 0;
}

inline int cmd_test(const RunConfig& cfg, const std::string& config_blob) {
  if (cfg.input.empty()) throw ConfigError("config: missing required key 'input'");
  require_seed(cfg, "test");
  const Dataset data = read_dataset(cfg.input);

  TestReport rep;
  if (cfg.test.kind == "homogeneity-quantiles") {
    const Intervention g = cfg.intervention.resolve(data);
    rep = test_homogeneity_quantiles(data, g, cfg.test.a, cfg.test.grid_step,
                                     cfg.bootstrap.draws, cfg.seed, cfg.estimator,
                                     cfg.bootstrap.weights);
  } else if (cfg.test.kind == "homogeneity-interventions") {
    const Intervention family = cfg.intervention.resolve_family(data);
    if (cfg.test.tau1 <= 0.0 || cfg.test.tau2 <= 0.0)
      throw ConfigError("config: missing required key 'test.tau1'/'test.tau2'");
    rep = test_homogeneity_interventions(data, family,
                                         IndexU(cfg.test.tau1, cfg.test.tau2),
                                         cfg.test.sigma_grid, cfg.bootstrap.draws,
                                         cfg.seed, cfg.estimator, cfg.bootstrap.weights);
  } else if (cfg.test.kind == "optimality") {
    const Intervention family = cfg.intervention.resolve_family(data);
    if (cfg.test.tau1 <= 0.0 || cfg.test.tau2 <= 0.0)
      throw ConfigError("config: missing required key 'test.tau1'/'test.tau2'");
    rep = test_optimality(data, family, IndexU(cfg.test.tau1, cfg.test.tau2),
                          cfg.test.sigma_star, cfg.test.sigma_grid, cfg.bootstrap.draws,
                          cfg.seed, cfg.estimator, cfg.bootstrap.weights);
  } else {
    throw ConfigError("config: test.kind must be homogeneity-quantiles, "
                      "homogeneity-interventions or optimality");
  }

  Outputs out{cfg.output_dir, {}};
  out.write("test_report.json", dump_json17(json_of(rep)));
  if (cfg.dump_draws) out.write("draws.csv", draws_csv(rep.draws));
  write_manifest(out, "test", config_blob, cfg);
  return 0;
}

inline int cmd_policy(const RunConfig& cfg, const std::string& config_blob) {
  if (cfg.input.empty()) throw ConfigError("config: missing required key 'input'");
  require_seed(cfg, "policy");
  if (cfg.policy.features.empty())
    throw ConfigError("config: missing required key 'policy.features'");
  const Dataset data = read_dataset(cfg.input);
  const Intervention g = cfg.intervention.resolve(data);
  PolicyClass pc;
  pc.features = cfg.policy.features;
  const WelfareReport rep =
      run_policy(data, IndexU(cfg.policy.tau1, cfg.policy.tau2), g, pc,
                 cfg.policy.folds, cfg.policy.bootstrap_draws, cfg.seed, cfg.estimator);

  Outputs out{cfg.output_dir, {}};
  out.write("welfare_report.json", dump_json17(json_of(rep)));
  write_manifest(out, "policy", config_blob, cfg);
  return 0;
}

inline int cmd_simulate(const RunConfig& cfg, const std::string& config_blob) {
  require_seed(cfg, "simulate");
  StudyConfig study;
  study.n = cfg.simulate.n;
  study.p_x = cfg.simulate.p_x;
  study.reps = cfg.simulate.reps;
  study.designs = cfg.simulate.designs;
  study.ranges = cfg.simulate.ranges;
  study.master_seed = cfg.seed;
  study.oracle_draws = cfg.simulate.oracle_draws;
  study.bias_ratio_of_means = cfg.simulate.bias_ratio_of_means;
  study.threads = cfg.threads;
  study.estimator = cfg.estimator;
  study.intervention = Intervention::simulation_location_scale();
  if (cfg.intervention_set) {
    // a location-scale family with mu = "mean" needs sample data to resolve
    DgpConfig probe_cfg;
    probe_cfg.n = std::max<Eigen::Index>(cfg.simulate.n, 16);
    probe_cfg.p_x = cfg.simulate.p_x;
    probe_cfg.r_d2 = cfg.simulate.designs.front().first;
    probe_cfg.r_y2 = cfg.simulate.designs.front().second;
    probe_cfg.seed = cfg.seed;
    const Dataset probe = dgp_sample(probe_cfg);
    study.intervention = cfg.intervention.resolve(probe);
  }

  const StudyReport report = run_study(study);
  Outputs out{cfg.output_dir, {}};
  out.write("study.csv", study_csv(report));
  out.write("study.txt", study_table(report));
  write_manifest(out, "simulate", config_blob, cfg);
  return 0;
}

}  // namespace detail

inline int run(int argc, char** argv) {
  CLI::App app{"ocppe: outcome-conditioned partial policy effects"};
  app.require_subcommand(1);

  std::string config_path;
  std::string input_override, output_override;
  std::int64_t seed_override = -1;
  int threads_override = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON configuration file")->required();
    sub->add_option("--input", input_override, "input CSV (overrides config)");
    sub->add_option("--output-dir", output_override, "output directory (overrides config)");
    sub->add_option("--seed", seed_override, "RNG seed (overrides config)");
    sub->add_option("--threads", threads_override, "worker threads (overrides config)");
  };

  CLI::App* estimate = app.add_subcommand("estimate", "point estimates over an index list");
  CLI::App* test = app.add_subcommand("test", "uniform hypothesis tests");
  CLI::App* policy = app.add_subcommand("policy", "EWM policy learning");
  CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo study");
  for (CLI::App* sub : {estimate, test, policy, simulate}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config file: " + config_path);
    const std::string blob((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    cjson j;
    try {
      j = cjson::parse(blob);
    } catch (const std::exception& e) {
      throw ConfigError("config parse error in " + config_path + ": " + e.what());
    }
    RunConfig cfg = parse_config(j);
    if (!input_override.empty()) cfg.input = input_override;
    if (!output_override.empty()) cfg.output_dir = output_override;
    if (seed_override >= 0) {
      cfg.seed = static_cast<std::uint64_t>(seed_override);
      cfg.seed_set = true;
    }
    if (threads_override > 0) cfg.threads = threads_override;

    if (estimate->parsed()) return detail::cmd_estimate(cfg, blob);
    if (test->parsed()) return detail::cmd_test(cfg, blob);
    if (policy->parsed()) return detail::cmd_policy(cfg, blob);
    if (simulate->parsed()) return detail::cmd_simulate(cfg, blob);
    throw ConfigError("no subcommand given");
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}

}  // namespace ocppe::cli
