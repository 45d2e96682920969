// Command-line front end: estimate / simulate / diagnose / featurize.
// Exit codes: 0 success, 2 input error, 3 computation error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "atelasso/io.hpp"
#include "atelasso/version.hpp"

namespace {

using atelasso::json;

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitCompute = 3;

void emit(const json& payload, const std::string& out_path) {
  const std::string text = payload.dump(2) + "\n";
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw atelasso::InputError("cannot write file: " + out_path);
    out << text;
  }
}

std::string file_digest_input(const std::vector<std::string>& parts) {
  std::string all;
  for (const auto& p : parts) {
    all += p;
    all += '\x1f';
  }
  return atelasso::hex64(atelasso::fnv1a64(all));
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw atelasso::InputError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void print_estimate_table(const std::vector<atelasso::AteReport>& reports) {
  std::printf("%-14s %12s %10s %24s %8s %8s\n", "method", "estimate", "se",
              "confidence interval", "sel(T)", "sel(C)");
  for (const auto& r : reports) {
    char interval[64];
    std::snprintf(interval, sizeof(interval), "[%.4f, %.4f]", r.ci_low, r.ci_high);
    std::printf("%-14s %12.4f %10.4f %24s %8s %8s\n",
                atelasso::method_name(r.method), r.estimate, r.std_error(),
                interval,
                r.selected_treated ? std::to_string(*r.selected_treated).c_str() : "-",
                r.selected_control ? std::to_string(*r.selected_control).c_str() : "-");
  }
}

void print_summary_table(const atelasso::MonteCarloSummary& summary) {
  std::printf("true ATE: %.6f\n", summary.true_ate);
  std::printf("%-14s %10s %10s %10s %10s %10s %8s %8s\n", "method", "bias", "sd",
              "rmse", "coverage", "length", "sel(T)", "sel(C)");
  for (const auto& [m, s] : summary.methods) {
    std::printf("%-14s %10.4f %10.4f %10.4f %10.4f %10.4f %8s %8s\n",
                atelasso::method_name(m), s.bias, s.sd, s.rmse, s.coverage,
                s.mean_ci_length,
                s.mean_selected_treated
                    ? std::to_string(*s.mean_selected_treated).substr(0, 6).c_str()
                    : "-",
                s.mean_selected_control
                    ? std::to_string(*s.mean_selected_control).substr(0, 6).c_str()
                    : "-");
  }
}

struct EstimateArgs {
  std::string data_csv;
  std::string meta_json;
  std::vector<std::string> methods;
  int K = 10;
  double ci_level = 0.95;
  std::uint64_t seed = 0;
  bool no_df_adjust = false;
  bool emit_cv = false;
  int n_lambda = 100;
  double lambda_min_ratio = 0.0;
  bool table = false;
  std::string out;
};

int run_estimate(const EstimateArgs& args) {
  const atelasso::CsvTable table = atelasso::read_csv(args.data_csv);
  const atelasso::DatasetMeta meta = atelasso::read_meta(args.meta_json);
  std::vector<std::string> covariate_names;
  const atelasso::ExperimentSample sample =
      atelasso::sample_from_table(table, meta, &covariate_names);

  std::vector<atelasso::Method> methods;
  if (args.methods.empty()) {
    methods = {atelasso::Method::unadjusted, atelasso::Method::ols,
               atelasso::Method::cv_lasso, atelasso::Method::cv_lasso_ols};
  } else {
    for (const auto& m : args.methods) {
      methods.push_back(atelasso::method_from_name(m));
    }
  }

  atelasso::LassoTuning tuning;
  tuning.K = args.K;
  tuning.seed = args.seed;
  tuning.df_adjust = !args.no_df_adjust;
  tuning.emit_cv = args.emit_cv;
  tuning.n_lambda = args.n_lambda;
  tuning.lambda_min_ratio = args.lambda_min_ratio;

  std::vector<atelasso::AteReport> reports;
  for (atelasso::Method m : methods) {
    switch (m) {
      case atelasso::Method::unadjusted:
        reports.push_back(atelasso::ate_unadjusted(sample, args.ci_level));
        break;
      case atelasso::Method::ols:
        reports.push_back(
            atelasso::ate_ols(sample, args.ci_level, tuning.df_adjust));
        break;
      case atelasso::Method::cv_lasso:
        reports.push_back(atelasso::ate_lasso(sample, tuning, args.ci_level));
        break;
      case atelasso::Method::cv_lasso_ols:
        reports.push_back(atelasso::ate_lasso_ols(sample, tuning, args.ci_level));
        break;
    }
  }

  json payload;
  payload["manifest"] = atelasso::to_json(atelasso::make_manifest(
      "estimate",
      file_digest_input({slurp(args.data_csv), slurp(args.meta_json),
                         json(args.methods).dump(), std::to_string(args.K),
                         std::to_string(args.ci_level), std::to_string(args.seed),
                         std::to_string(args.no_df_adjust),
                         std::to_string(args.n_lambda),
                         std::to_string(args.lambda_min_ratio)}),
      args.seed));
  payload["reports"] = json::array();
  for (const auto& r : reports) {
    payload["reports"].push_back(atelasso::to_json(r, covariate_names));
  }
  emit(payload, args.out);
  if (args.table) print_estimate_table(reports);
  return kExitOk;
}

struct SimulateArgs {
  std::string config_json;
  std::optional<std::uint64_t> seed;
  std::string out_json;
  std::string out_csv;
  int threads = 0;
  bool table = false;
};

int run_simulate(const SimulateArgs& args) {
  atelasso::SimulationConfig config =
      atelasso::read_simulation_config(args.config_json);
  if (args.seed) {
    config.seed = *args.seed;
  } else if (!json::parse(slurp(args.config_json)).contains("seed")) {
    throw atelasso::InputError(
        "simulate: a seed is required (set --seed or the config's seed field); "
        "wall-clock seeding is not supported");
  }

  const atelasso::Population pop = atelasso::generate_population(config);
  const atelasso::MonteCarloSummary summary =
      atelasso::run_monte_carlo(pop, config, args.threads);

  json payload;
  payload["manifest"] = atelasso::to_json(atelasso::make_manifest(
      "simulate", file_digest_input({atelasso::to_json(config).dump()}),
      config.seed));
  payload["summary"] = atelasso::to_json(summary, config);
  emit(payload, args.out_json);
  if (!args.out_csv.empty()) {
    atelasso::write_replication_csv(args.out_csv, summary);
  }
  if (args.table) print_summary_table(summary);
  return kExitOk;
}

struct DiagnoseArgs {
  std::string data_csv;
  std::string meta_json;
  int B = 1000;
  double threshold = 0.5;
  std::uint64_t seed = 0;
  int K = 10;
  int n_lambda = 100;
  double fourth_moment_flag = 30.0;
  double scaling_flag = 1.0;
  std::string out;
  bool table = false;
};

int run_diagnose(const DiagnoseArgs& args) {
  const atelasso::CsvTable table = atelasso::read_csv(args.data_csv);
  const atelasso::DatasetMeta meta = atelasso::read_meta(args.meta_json);
  std::vector<std::string> covariate_names;
  const atelasso::ExperimentSample sample =
      atelasso::sample_from_table(table, meta, &covariate_names);

  atelasso::DiagnosticsOptions opts;
  opts.bootstrap_resamples = args.B;
  opts.selection_threshold = args.threshold;
  opts.tuning.K = args.K;
  opts.tuning.n_lambda = args.n_lambda;
  opts.fourth_moment_flag = args.fourth_moment_flag;
  opts.scaling_flag = args.scaling_flag;

  const atelasso::DiagnosticsReport report =
      atelasso::run_diagnostics(sample, opts, args.seed);

  json payload;
  payload["manifest"] = atelasso::to_json(atelasso::make_manifest(
      "diagnose",
      file_digest_input({slurp(args.data_csv), slurp(args.meta_json),
                         std::to_string(args.B), std::to_string(args.threshold),
                         std::to_string(args.seed)}),
      args.seed));
  payload["diagnostics"] = atelasso::to_json(report, covariate_names);
  emit(payload, args.out);

  if (args.table) {
    std::printf("%-28s %12s  %s\n", "quantity", "value", "status");
    std::printf("%-28s %12.4f  %s\n", "max fourth moment",
                report.max_fourth_moment,
                report.flagged_fourth_moment.empty() ? "PASS" : "FLAG");
    std::printf("%-28s %12d  %s\n", "support size", report.support_size, "-");
    std::printf("%-28s %12.4f  %s\n", "delta_n", report.delta_n_hat, "-");
    std::printf("%-28s %12.4f  %s\n", "scaling s*log(p)/sqrt(n)",
                report.scaling_stat, report.scaling_flagged ? "FLAG" : "PASS");
    if (report.gram_eigs_on_support) {
      std::printf("%-28s %12.4f  %s\n", "sub-Gram min eigenvalue",
                  report.gram_eigs_on_support->first, "-");
      std::printf("%-28s %12.4f  %s\n", "sub-Gram max eigenvalue",
                  report.gram_eigs_on_support->second, "-");
    }
  }
  return kExitOk;
}

struct FeaturizeArgs {
  std::string raw_csv;
  std::string meta_json;
  bool no_quadratics = false;
  bool no_interactions = false;
  double corr_threshold = 0.95;
  int min_ones = 20;
  bool no_standardize = false;
  std::string out_csv;
  std::string out_meta;
};

int run_featurize(const FeaturizeArgs& args) {
  const atelasso::CsvTable table = atelasso::read_csv(args.raw_csv);
  const atelasso::DatasetMeta meta = atelasso::read_meta(args.meta_json);

  std::vector<bool> indicator;
  indicator.reserve(table.header.size());
  for (const auto& name : table.header) {
    indicator.push_back(meta.is_indicator(name));
  }

  atelasso::FeaturizeOptions opts;
  opts.include_quadratics = !args.no_quadratics;
  opts.include_interactions = !args.no_interactions;
  opts.corr_threshold = args.corr_threshold;
  opts.min_ones = args.min_ones;
  opts.standardize = !args.no_standardize;

  const atelasso::DesignMatrix dm =
      atelasso::build_design_matrix(table.values, table.header, indicator, opts);

  atelasso::write_csv(args.out_csv, dm.column_names, dm.columns);
  json payload;
  payload["manifest"] = atelasso::to_json(atelasso::make_manifest(
      "featurize",
      file_digest_input({slurp(args.raw_csv), slurp(args.meta_json),
                         std::to_string(opts.include_quadratics),
                         std::to_string(opts.include_interactions),
                         std::to_string(opts.corr_threshold),
                         std::to_string(opts.min_ones),
                         std::to_string(opts.standardize)}),
      0));
  payload["design_matrix"] = atelasso::design_matrix_meta_json(dm);
  emit(payload, args.out_meta);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Average treatment effect estimation in completely randomized "
               "experiments with high-dimensional regression adjustment"};
  app.set_version_flag("--version", atelasso::kVersion);
  app.require_subcommand(1);

  EstimateArgs est;
  auto* estimate = app.add_subcommand(
      "estimate", "Estimate the ATE from a CSV of outcomes and covariates");
  estimate->add_option("data_csv", est.data_csv, "Input data CSV")->required();
  estimate->add_option("meta_json", est.meta_json,
                       "Metadata JSON naming the outcome/treatment columns")
      ->required();
  estimate->add_option("--method", est.methods,
                       "Estimators to run (unadjusted, ols, cv_lasso, "
                       "cv_lasso_ols); default all");
  estimate->add_option("--K", est.K, "Cross-validation folds");
  estimate->add_option("--ci-level", est.ci_level, "Confidence level");
  estimate->add_option("--seed", est.seed, "Seed for fold assignment");
  estimate->add_flag("--no-df-adjust", est.no_df_adjust,
                     "Use the degrees-of-freedom-unadjusted variance");
  estimate->add_flag("--emit-cv", est.emit_cv,
                     "Embed the cross-validation curves in the report");
  estimate->add_option("--n-lambda", est.n_lambda,
                       "Grid size; 1 pins the grid to lambda_max");
  estimate->add_option("--lambda-min-ratio", est.lambda_min_ratio,
                       "Smallest grid value as a fraction of lambda_max");
  estimate->add_flag("--table", est.table, "Also print a text table");
  estimate->add_option("--out", est.out, "Output JSON path (default stdout)");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand(
      "simulate", "Run a Monte Carlo study over a frozen synthetic population");
  simulate->add_option("config_json", sim.config_json, "Simulation config JSON")
      ->required();
  std::uint64_t sim_seed = 0;
  auto* sim_seed_opt =
      simulate->add_option("--seed", sim_seed, "Master seed (overrides config)");
  simulate->add_option("--out-json", sim.out_json, "Summary JSON path");
  simulate->add_option("--out-csv", sim.out_csv, "Per-replication CSV path");
  simulate->add_option("--threads", sim.threads,
                       "Worker threads (default: ATELASSO_THREADS or hardware)");
  simulate->add_flag("--table", sim.table, "Also print a text table");

  DiagnoseArgs diag;
  auto* diagnose = app.add_subcommand(
      "diagnose", "Inspect condition proxies via the bootstrap support estimate");
  diagnose->add_option("data_csv", diag.data_csv, "Input data CSV")->required();
  diagnose->add_option("meta_json", diag.meta_json, "Metadata JSON")->required();
  diagnose->add_option("--B", diag.B, "Bootstrap resamples per group");
  diagnose->add_option("--threshold", diag.threshold, "Selection fraction cutoff");
  diagnose->add_option("--seed", diag.seed, "Seed")->required();
  diagnose->add_option("--K", diag.K, "Cross-validation folds");
  diagnose->add_option("--n-lambda", diag.n_lambda, "Grid size");
  diagnose->add_option("--fourth-moment-flag", diag.fourth_moment_flag,
                       "Advisory flag threshold for fourth moments");
  diagnose->add_option("--scaling-flag", diag.scaling_flag,
                       "Advisory flag threshold for the scaling statistic");
  diagnose->add_flag("--table", diag.table, "Also print a PASS/FLAG table");
  diagnose->add_option("--out", diag.out, "Output JSON path (default stdout)");

  FeaturizeArgs feat;
  auto* featurize = app.add_subcommand(
      "featurize", "Expand raw covariates into a filtered design matrix");
  featurize->add_option("raw_csv", feat.raw_csv, "Raw covariate CSV")->required();
  featurize->add_option("meta_json", feat.meta_json,
                        "Metadata JSON with per-column indicator flags")
      ->required();
  featurize->add_flag("--no-quadratics", feat.no_quadratics,
                      "Skip quadratic terms");
  featurize->add_flag("--no-interactions", feat.no_interactions,
                      "Skip pairwise interactions");
  featurize->add_option("--corr-threshold", feat.corr_threshold,
                        "Drop derived columns above this |correlation| with a main");
  featurize->add_option("--min-ones", feat.min_ones,
                        "Minimum count of ones for indicator columns");
  featurize->add_flag("--no-standardize", feat.no_standardize,
                      "Skip centering/standardization");
  featurize->add_option("--out-csv", feat.out_csv, "Design matrix CSV path")
      ->required();
  featurize->add_option("--out-meta", feat.out_meta,
                        "Design matrix metadata JSON path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*estimate) return run_estimate(est);
    if (*simulate) {
      if (*sim_seed_opt) sim.seed = sim_seed;
      return run_simulate(sim);
    }
    if (*diagnose) return run_diagnose(diag);
    if (*featurize) return run_featurize(feat);
  } catch (const atelasso::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const atelasso::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCompute;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCompute;
  }
  return kExitOk;
}
