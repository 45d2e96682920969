#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "atelasso/data.hpp"
#include "atelasso/estimators.hpp"

namespace atelasso {

enum class ErrorFamily { gaussian, t1, t3 };

const char* error_family_name(ErrorFamily f);
ErrorFamily error_family_from_name(const std::string& name);

/// Finite-population Monte Carlo design: a nonlinear potential-outcome
/// generator over Toeplitz-correlated Gaussian covariates, with optional
/// hidden-covariate error structure and heavy-tailed noise stress cases.
struct SimulationConfig {
  int n = 250;
  int p = 50;
  int s = 10;            // number of active covariates
  double rho = 0.0;      // Toeplitz correlation parameter
  int n_A = 125;
  int replications = 2000;
  std::uint64_t seed = 0;
  bool linear_only = false;        // zero the exponential-term coefficients
  bool hidden_covariates = true;   // hidden linear error component
  ErrorFamily error_family = ErrorFamily::gaussian;
  double noise_scale = 1.0;        // multiplier on the idiosyncratic noise
  std::vector<Method> methods = {Method::unadjusted, Method::ols,
                                 Method::cv_lasso, Method::cv_lasso_ols};
  double ci_level = 0.95;
  LassoTuning tuning;
  int bootstrap_resamples = 500;

  void validate() const;  // throws InputError
};

/// Everything recorded about one (replication, method) run.
struct ReplicationRecord {
  int replication = 0;
  Method method = Method::unadjusted;
  bool failed = false;
  std::string error;
  double estimate = 0.0;
  double sigma2_hat = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool covered = false;
  std::optional<int> selected_treated;
  std::optional<int> selected_control;
};

struct MethodSummary {
  double bias = 0.0;
  double sd = 0.0;    // population SD over replications, so rmse^2 = bias^2 + sd^2
  double rmse = 0.0;
  double coverage = 0.0;
  double mean_ci_length = 0.0;
  std::optional<double> mean_selected_treated;
  std::optional<double> mean_selected_control;
  // Bootstrap standard errors of the statistics above.
  double se_bias = 0.0;
  double se_sd = 0.0;
  double se_rmse = 0.0;
  double se_coverage = 0.0;
  double se_mean_ci_length = 0.0;
  std::optional<double> se_mean_selected_treated;
  std::optional<double> se_mean_selected_control;
  int failures = 0;
  int replications_used = 0;
};

struct MonteCarloSummary {
  double true_ate = 0.0;
  std::vector<std::pair<Method, MethodSummary>> methods;  // config order
  std::vector<ReplicationRecord> records;  // replication-major, method order
};

/// Uniformly random size-n_A subset marked 1; deterministic in the seed.
Eigen::VectorXi complete_randomization(int n, int n_A, std::uint64_t seed);

/// Sigma_ij = rho^|i-j|.
Eigen::MatrixXd toeplitz_covariance(int p, double rho);

/// Draws covariates, coefficients, hidden covariates and noise once; the
/// resulting population is fixed and only the assignment is random afterward.
Population generate_population(const SimulationConfig& config);

/// Runs `config.replications` completely randomized experiments on a frozen
/// population. Replication r derives its seeds from config.seed XOR r, so
/// results are identical for any `threads` value (0 picks a default from the
/// ATELASSO_THREADS environment variable or the hardware concurrency).
MonteCarloSummary run_monte_carlo(const Population& pop,
                                  const SimulationConfig& config,
                                  int threads = 0);

/// Exact randomization distribution of an estimator statistic, computed by
/// visiting every size-n_A treatment subset. Feasible while C(n, n_A) <= 1e6.
struct EnumerationResult {
  double mean = 0.0;
  double variance = 0.0;    // population variance over assignments
  double ci_coverage = 0.0; // fraction of assignments whose CI covers true ATE
  std::size_t n_assignments = 0;
};
EnumerationResult enumerate_assignments(
    const Population& pop, int n_A,
    const std::function<AteReport(const ExperimentSample&)>& estimator);

/// Visits every size-n_A subset of {0..n-1} in lexicographic order.
void for_each_assignment(int n, int n_A,
                         const std::function<void(const Eigen::VectorXi&)>& fn);

double binomial_coefficient(int n, int k);

/// Massart's tau: min{1/70, (3 p_A)^2/70, (3 - 3 p_A)^2/70}.
double massart_tau(double p_A);

/// Empirical tail of the without-replacement subset mean against the
/// concentration bound exp{-p_A n_A t^2 / ((1+tau)^2 sigma^2)}. The tail is
/// exact (full enumeration) when C(n, n_A) <= 1e6, else Monte Carlo over
/// `trials` assignments.
struct TailCheckRow {
  double t = 0.0;
  double empirical = 0.0;
  double bound = 0.0;
};
std::vector<TailCheckRow> concentration_bound_check(
    const Eigen::VectorXd& z, int n_A, const std::vector<double>& t_grid,
    int trials, std::uint64_t seed);

}  // namespace atelasso
