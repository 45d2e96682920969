#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "atelasso/cross_validation.hpp"
#include "atelasso/data.hpp"
#include "atelasso/lasso.hpp"

namespace atelasso {

enum class Method { unadjusted, ols, cv_lasso, cv_lasso_ols };

const char* method_name(Method m);
Method method_from_name(const std::string& name);

/// One estimator's output. sigma2_hat is the variance estimate on the
/// sqrt(n) * (estimate - ATE) scale, so the confidence interval is
/// estimate -/+ z * sqrt(sigma2_hat / n).
struct AteReport {
  Method method = Method::unadjusted;
  double estimate = 0.0;
  double sigma2_hat = 0.0;
  int n = 0;
  /// Standard error of the estimate: sqrt(sigma2_hat / n).
  double std_error() const;
  double ci_level = 0.95;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::optional<int> selected_treated;
  std::optional<int> selected_control;
  bool df_adjusted = true;
  /// cv(Lasso+OLS) only: the full-group OLS refit was ill-posed and the Lasso
  /// coefficients were used instead.
  bool refit_fallback = false;
  /// The CV optimum produced a support too large for the df-adjusted variance
  /// (df >= group size); the deepest feasible grid value was used instead.
  bool selection_capped = false;
  std::optional<std::vector<int>> support_treated;
  std::optional<std::vector<int>> support_control;
  std::optional<CvResult> cv_treated;
  std::optional<CvResult> cv_control;
};

/// Tuning for the cross-validated estimators. n_lambda = 1 pins the grid to
/// the single value lambda_max, which reverts the adjusted estimators to the
/// unadjusted one.
struct LassoTuning {
  int n_lambda = 100;
  double lambda_min_ratio = 0.0;  // 0 => 1e-3 when p >= n_g, else 1e-4
  int K = 10;
  std::uint64_t seed = 0;
  bool df_adjust = true;          // recommended variance estimate
  bool emit_cv = false;           // retain CvResult in the report
};

/// Difference of group means with the Neyman conservative variance
/// (group sample variances scaled by n / n_g). Requires both groups >= 2.
AteReport ate_unadjusted(const ExperimentSample& sample, double ci_level = 0.95);

/// Regression-adjusted point estimate
///   [abar_A - (xbar_A - xbar)' beta_a] - [bbar_B - (xbar_B - xbar)' beta_b],
/// where xbar is the full-sample covariate mean.
double ate_adjusted(const ExperimentSample& sample, const AdjustmentFit& fit_a,
                    const AdjustmentFit& fit_b);

/// OLS adjustment with separate per-group regressions on all covariates;
/// degrees of freedom p + 1 per group. Requires p < min(n_A, n_B).
AteReport ate_ols(const ExperimentSample& sample, double ci_level = 0.95,
                  bool df_adjust = true);

/// Lasso adjustment with per-group 10-fold CV choosing separate penalties,
/// then a full-group fit at each optimum.
AteReport ate_lasso(const ExperimentSample& sample, const LassoTuning& tuning,
                    double ci_level = 0.95);

/// Lasso+OLS adjustment: per group, cv(Lasso+OLS) selects the penalty, the
/// full-group Lasso at that penalty selects the support, and an OLS refit on
/// the support provides the adjustment vector.
AteReport ate_lasso_ols(const ExperimentSample& sample, const LassoTuning& tuning,
                        double ci_level = 0.95);

/// Both cross-validated reports from one pass over the per-fold solution
/// paths. Numerically identical to calling ate_lasso and ate_lasso_ols with
/// the same tuning; the simulation harness uses this to avoid fitting every
/// path twice.
std::pair<AteReport, AteReport> ate_lasso_both(const ExperimentSample& sample,
                                               const LassoTuning& tuning,
                                               double ci_level = 0.95);

/// Conservative variance estimate (n/n_A) s2_a + (n/n_B) s2_b where s2_g is
/// the within-group residual mean square with denominator n_g - df
/// (df = |support| + 1), or n_g when df_adjust is false.
double neyman_variance_adjusted(const ExperimentSample& sample,
                                const AdjustmentFit& fit_a,
                                const AdjustmentFit& fit_b,
                                bool df_adjust = true);

/// estimate -/+ z_{(1+level)/2} * sqrt(sigma2_hat / n).
std::pair<double, double> confidence_interval(double estimate, double sigma2_hat,
                                              int n, double level);

}  // namespace atelasso
