#include "atelasso/estimators.hpp"

#include <cmath>

#include "atelasso/rng.hpp"
#include "atelasso/stats.hpp"

namespace atelasso {

namespace {

constexpr std::uint64_t kGroupTagTreated = 0xa1;
constexpr std::uint64_t kGroupTagControl = 0xb2;

struct Groups {
  Eigen::MatrixXd X_a, X_b;
  Eigen::VectorXd y_a, y_b;
  int n_a = 0, n_b = 0;
};

Groups split_groups(const ExperimentSample& sample) {
  Groups g;
  const auto ia = sample.treated_indices();
  const auto ib = sample.control_indices();
  g.X_a = sample.covariate_rows(ia);
  g.X_b = sample.covariate_rows(ib);
  g.y_a = sample.observed_at(ia);
  g.y_b = sample.observed_at(ib);
  g.n_a = static_cast<int>(ia.size());
  g.n_b = static_cast<int>(ib.size());
  return g;
}

void require_group_sizes(const Groups& g, int minimum, const char* who) {
  if (g.n_a < minimum || g.n_b < minimum) {
    throw InputError(std::string(who) + ": both groups need at least " +
                     std::to_string(minimum) + " members (have " +
                     std::to_string(g.n_a) + " treated, " +
                     std::to_string(g.n_b) + " control)");
  }
}

double group_residual_mean_square(const Eigen::MatrixXd& X_g,
                                  const Eigen::VectorXd& y_g,
                                  const AdjustmentFit& fit, int df,
                                  bool df_adjust, const char* group) {
  const int n_g = static_cast<int>(y_g.size());
  if (df_adjust && n_g <= df) {
    throw ComputeError(
        std::string("neyman_variance: ") + group + " group has n_g = " +
        std::to_string(n_g) + " <= df = " + std::to_string(df) +
        "; use the df-unadjusted variant (df_adjust = false), noting that it "
        "may yield low finite-sample coverage");
  }
  const Eigen::VectorXd xbar = X_g.colwise().mean();
  const double ybar = y_g.mean();
  double sse = 0.0;
  for (int i = 0; i < n_g; ++i) {
    double pred = ybar;
    for (int j : fit.support) {
      pred += (X_g(i, j) - xbar[j]) * fit.beta[j];
    }
    const double d = y_g[i] - pred;
    sse += d * d;
  }
  const double denom = df_adjust ? static_cast<double>(n_g - df)
                                 : static_cast<double>(n_g);
  return sse / denom;
}

double neyman_variance_impl(const ExperimentSample& sample,
                            const AdjustmentFit& fit_a, const AdjustmentFit& fit_b,
                            int df_a, int df_b, bool df_adjust) {
  const Groups g = split_groups(sample);
  const double s2_a = group_residual_mean_square(g.X_a, g.y_a, fit_a, df_a,
                                                 df_adjust, "treated");
  const double s2_b = group_residual_mean_square(g.X_b, g.y_b, fit_b, df_b,
                                                 df_adjust, "control");
  const double n = static_cast<double>(sample.n());
  return (n / g.n_a) * s2_a + (n / g.n_b) * s2_b;
}

LambdaGrid make_tuning_grid(const Eigen::MatrixXd& X_g, const Eigen::VectorXd& y_g,
                            const LassoTuning& tuning) {
  if (tuning.n_lambda < 1) throw InputError("tuning: n_lambda must be >= 1");
  if (tuning.n_lambda == 1) {
    const double lmax = lasso_lambda_max(X_g, y_g);
    if (lmax <= 0.0) {
      throw ComputeError("tuning: lambda_max = 0, grid degenerate");
    }
    return LambdaGrid::single(lmax);
  }
  return lambda_grid(X_g, y_g, tuning.n_lambda, tuning.lambda_min_ratio);
}

void fill_interval(AteReport& rep, int n) {
  rep.n = n;
  const auto [lo, hi] = confidence_interval(rep.estimate, rep.sigma2_hat, n,
                                            rep.ci_level);
  rep.ci_low = lo;
  rep.ci_high = hi;
}

/// CV selections and the full-group Lasso fits at the chosen penalties for
/// one group. The path is fit once down to the deepest index needed.
struct GroupChoice {
  CvResult cv_lasso_result;
  CvResult cv_refit_result;
  AdjustmentFit fit_at_lasso_opt;
  AdjustmentFit fit_at_refit_opt;
  bool has_lasso = false;
  bool has_refit = false;
  bool lasso_capped = false;
  bool refit_capped = false;
};

GroupChoice choose_group(const Eigen::MatrixXd& X_g, const Eigen::VectorXd& y_g,
                         const LassoTuning& tuning, std::uint64_t group_tag,
                         bool want_lasso, bool want_refit) {
  const LambdaGrid grid = make_tuning_grid(X_g, y_g, tuning);
  const std::uint64_t seed = derive_seed(tuning.seed, group_tag);

  GroupChoice out;
  out.has_lasso = want_lasso;
  out.has_refit = want_refit;
  if (want_lasso && want_refit) {
    CvPair pair = cv_lasso_pair(X_g, y_g, grid, tuning.K, seed);
    out.cv_lasso_result = std::move(pair.lasso);
    out.cv_refit_result = std::move(pair.lasso_ols);
  } else if (want_lasso) {
    out.cv_lasso_result = cv_lasso(X_g, y_g, grid, tuning.K, seed);
  } else {
    out.cv_refit_result = cv_lasso_ols(X_g, y_g, grid, tuning.K, seed);
  }

  int deepest = 0;
  if (want_lasso) deepest = std::max(deepest, out.cv_lasso_result.optimal_index);
  if (want_refit) deepest = std::max(deepest, out.cv_refit_result.optimal_index);

  LambdaGrid prefix;
  prefix.values.assign(grid.values.begin(), grid.values.begin() + deepest + 1);
  const auto fits = lasso_path(X_g, y_g, prefix);

  // With p >= n_g the CV optimum can sit in the near-saturated tail of the
  // path, where the support is too large for the df-adjusted variance
  // (df = s+1 >= n_g). Keep the deepest grid value whose fit stays feasible;
  // the replacement is reported via selection_capped.
  const int n_g = static_cast<int>(y_g.size());
  auto pick = [&](int optimal_index, bool& capped) -> const AdjustmentFit& {
    if (!tuning.df_adjust) {
      return fits[static_cast<std::size_t>(optimal_index)];
    }
    int best = 0;
    for (int j = 1; j <= optimal_index; ++j) {
      if (fits[static_cast<std::size_t>(j)].df() < n_g) best = j;
    }
    capped = best != optimal_index;
    return fits[static_cast<std::size_t>(best)];
  };
  if (want_lasso) {
    out.fit_at_lasso_opt =
        pick(out.cv_lasso_result.optimal_index, out.lasso_capped);
  }
  if (want_refit) {
    out.fit_at_refit_opt =
        pick(out.cv_refit_result.optimal_index, out.refit_capped);
  }
  return out;
}

AteReport assemble_lasso_report(const ExperimentSample& sample,
                                GroupChoice& a, GroupChoice& b,
                                const LassoTuning& tuning, double ci_level) {
  AteReport rep;
  rep.method = Method::cv_lasso;
  rep.ci_level = ci_level;
  rep.df_adjusted = tuning.df_adjust;
  rep.selection_capped = a.lasso_capped || b.lasso_capped;
  const AdjustmentFit& fa = a.fit_at_lasso_opt;
  const AdjustmentFit& fb = b.fit_at_lasso_opt;
  rep.estimate = ate_adjusted(sample, fa, fb);
  rep.sigma2_hat = neyman_variance_impl(sample, fa, fb, fa.df(), fb.df(),
                                        tuning.df_adjust);
  rep.selected_treated = static_cast<int>(fa.support.size());
  rep.selected_control = static_cast<int>(fb.support.size());
  rep.support_treated = fa.support;
  rep.support_control = fb.support;
  if (tuning.emit_cv) {
    rep.cv_treated = a.cv_lasso_result;
    rep.cv_control = b.cv_lasso_result;
  }
  fill_interval(rep, sample.n());
  return rep;
}

AteReport assemble_lasso_ols_report(const ExperimentSample& sample,
                                    const Groups& g, GroupChoice& a,
                                    GroupChoice& b, const LassoTuning& tuning,
                                    double ci_level) {
  AteReport rep;
  rep.method = Method::cv_lasso_ols;
  rep.ci_level = ci_level;
  rep.df_adjusted = tuning.df_adjust;
  rep.selection_capped = a.refit_capped || b.refit_capped;

  auto refit_group = [&rep](const Eigen::MatrixXd& X_g, const Eigen::VectorXd& y_g,
                            const AdjustmentFit& lasso_fit) {
    try {
      return fit_ols(X_g, y_g, lasso_fit.support);
    } catch (const ComputeError&) {
      rep.refit_fallback = true;
      return lasso_fit;
    }
  };
  const AdjustmentFit fit_a = refit_group(g.X_a, g.y_a, a.fit_at_refit_opt);
  const AdjustmentFit fit_b = refit_group(g.X_b, g.y_b, b.fit_at_refit_opt);

  rep.estimate = ate_adjusted(sample, fit_a, fit_b);
  const int df_a = static_cast<int>(a.fit_at_refit_opt.support.size()) + 1;
  const int df_b = static_cast<int>(b.fit_at_refit_opt.support.size()) + 1;
  rep.sigma2_hat = neyman_variance_impl(sample, fit_a, fit_b, df_a, df_b,
                                        tuning.df_adjust);
  rep.selected_treated = static_cast<int>(a.fit_at_refit_opt.support.size());
  rep.selected_control = static_cast<int>(b.fit_at_refit_opt.support.size());
  rep.support_treated = a.fit_at_refit_opt.support;
  rep.support_control = b.fit_at_refit_opt.support;
  if (tuning.emit_cv) {
    rep.cv_treated = a.cv_refit_result;
    rep.cv_control = b.cv_refit_result;
  }
  fill_interval(rep, sample.n());
  return rep;
}

Groups split_and_check(const ExperimentSample& sample, const LassoTuning& tuning,
                       const char* who) {
  Groups g = split_groups(sample);
  if (g.n_a < tuning.K || g.n_b < tuning.K) {
    throw InputError(std::string(who) + ": both groups need at least K = " +
                     std::to_string(tuning.K) + " members");
  }
  return g;
}

}  // namespace

double AteReport::std_error() const {
  return std::sqrt(sigma2_hat / std::max(n, 1));
}

const char* method_name(Method m) {
  switch (m) {
    case Method::unadjusted: return "unadjusted";
    case Method::ols: return "ols";
    case Method::cv_lasso: return "cv_lasso";
    case Method::cv_lasso_ols: return "cv_lasso_ols";
  }
  return "unknown";
}

Method method_from_name(const std::string& name) {
  if (name == "unadjusted") return Method::unadjusted;
  if (name == "ols") return Method::ols;
  if (name == "cv_lasso") return Method::cv_lasso;
  if (name == "cv_lasso_ols") return Method::cv_lasso_ols;
  throw InputError("unknown method '" + name +
                   "' (expected unadjusted, ols, cv_lasso or cv_lasso_ols)");
}

AteReport ate_unadjusted(const ExperimentSample& sample, double ci_level) {
  const Groups g = split_groups(sample);
  require_group_sizes(g, 2, "ate_unadjusted");
  AteReport rep;
  rep.method = Method::unadjusted;
  rep.ci_level = ci_level;
  rep.estimate = g.y_a.mean() - g.y_b.mean();
  const double n = static_cast<double>(sample.n());
  rep.sigma2_hat = (n / g.n_a) * sample_variance(g.y_a) +
                   (n / g.n_b) * sample_variance(g.y_b);
  fill_interval(rep, sample.n());
  return rep;
}

double ate_adjusted(const ExperimentSample& sample, const AdjustmentFit& fit_a,
                    const AdjustmentFit& fit_b) {
  if (fit_a.beta.size() != sample.p() || fit_b.beta.size() != sample.p()) {
    throw InputError("ate_adjusted: adjustment vectors do not match the "
                     "sample's covariate dimension");
  }
  const Groups g = split_groups(sample);
  const Eigen::VectorXd xbar = sample.covariates.colwise().mean();
  const Eigen::VectorXd xbar_a = g.X_a.colwise().mean();
  const Eigen::VectorXd xbar_b = g.X_b.colwise().mean();
  const double treated_part = g.y_a.mean() - (xbar_a - xbar).dot(fit_a.beta);
  const double control_part = g.y_b.mean() - (xbar_b - xbar).dot(fit_b.beta);
  return treated_part - control_part;
}

AteReport ate_ols(const ExperimentSample& sample, double ci_level, bool df_adjust) {
  const Groups g = split_groups(sample);
  require_group_sizes(g, 2, "ate_ols");
  const int p = sample.p();
  if (p >= std::min(g.n_a, g.n_b)) {
    throw ComputeError("ate_ols: p = " + std::to_string(p) +
                       " is not below min group size " +
                       std::to_string(std::min(g.n_a, g.n_b)) +
                       "; use the Lasso-adjusted estimators instead");
  }
  AdjustmentFit fit_a, fit_b;
  try {
    fit_a = fit_ols(g.X_a, g.y_a);
    fit_b = fit_ols(g.X_b, g.y_b);
  } catch (const ComputeError& e) {
    throw ComputeError(std::string(e.what()) +
                       "; use the Lasso-adjusted estimators instead");
  }
  AteReport rep;
  rep.method = Method::ols;
  rep.ci_level = ci_level;
  rep.df_adjusted = df_adjust;
  rep.estimate = ate_adjusted(sample, fit_a, fit_b);
  rep.sigma2_hat = neyman_variance_impl(sample, fit_a, fit_b, p + 1, p + 1,
                                        df_adjust);
  fill_interval(rep, sample.n());
  return rep;
}

AteReport ate_lasso(const ExperimentSample& sample, const LassoTuning& tuning,
                    double ci_level) {
  const Groups g = split_and_check(sample, tuning, "ate_lasso");
  GroupChoice a = choose_group(g.X_a, g.y_a, tuning, kGroupTagTreated, true, false);
  GroupChoice b = choose_group(g.X_b, g.y_b, tuning, kGroupTagControl, true, false);
  return assemble_lasso_report(sample, a, b, tuning, ci_level);
}

AteReport ate_lasso_ols(const ExperimentSample& sample, const LassoTuning& tuning,
                        double ci_level) {
  const Groups g = split_and_check(sample, tuning, "ate_lasso_ols");
  GroupChoice a = choose_group(g.X_a, g.y_a, tuning, kGroupTagTreated, false, true);
  GroupChoice b = choose_group(g.X_b, g.y_b, tuning, kGroupTagControl, false, true);
  return assemble_lasso_ols_report(sample, g, a, b, tuning, ci_level);
}

std::pair<AteReport, AteReport> ate_lasso_both(const ExperimentSample& sample,
                                               const LassoTuning& tuning,
                                               double ci_level) {
  const Groups g = split_and_check(sample, tuning, "ate_lasso_both");
  GroupChoice a = choose_group(g.X_a, g.y_a, tuning, kGroupTagTreated, true, true);
  GroupChoice b = choose_group(g.X_b, g.y_b, tuning, kGroupTagControl, true, true);
  AteReport lasso = assemble_lasso_report(sample, a, b, tuning, ci_level);
  AteReport lasso_ols =
      assemble_lasso_ols_report(sample, g, a, b, tuning, ci_level);
  return {std::move(lasso), std::move(lasso_ols)};
}

double neyman_variance_adjusted(const ExperimentSample& sample,
                                const AdjustmentFit& fit_a,
                                const AdjustmentFit& fit_b, bool df_adjust) {
  if (fit_a.beta.size() != sample.p() || fit_b.beta.size() != sample.p()) {
    throw InputError("neyman_variance_adjusted: adjustment vectors do not "
                     "match the sample's covariate dimension");
  }
  return neyman_variance_impl(sample, fit_a, fit_b, fit_a.df(), fit_b.df(),
                              df_adjust);
}

std::pair<double, double> confidence_interval(double estimate, double sigma2_hat,
                                              int n, double level) {
  if (sigma2_hat < 0.0) {
    throw InputError("confidence_interval: sigma2_hat must be nonnegative");
  }
  if (n < 1) throw InputError("confidence_interval: n must be positive");
  const double half = two_sided_z(level) * std::sqrt(sigma2_hat / n);
  return {estimate - half, estimate + half};
}

}  // namespace atelasso
