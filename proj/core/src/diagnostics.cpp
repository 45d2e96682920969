#include "atelasso/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "atelasso/cross_validation.hpp"
#include "atelasso/lasso.hpp"
#include "atelasso/rng.hpp"
#include "atelasso/simulation.hpp"

namespace atelasso {

namespace {

constexpr std::uint64_t kStreamBootstrapRows = 11;
constexpr std::uint64_t kGroupTagTreatedDiag = 0xd1;
constexpr std::uint64_t kGroupTagControlDiag = 0xd2;

/// Full cv(Lasso+OLS) pipeline on one (X, y) resample: CV picks the penalty,
/// the Lasso at that penalty picks the support, OLS refits on it.
AdjustmentFit lasso_ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const LassoTuning& tuning, std::uint64_t seed) {
  LambdaGrid grid;
  if (tuning.n_lambda == 1) {
    grid = LambdaGrid::single(lasso_lambda_max(X, y));
  } else {
    grid = lambda_grid(X, y, tuning.n_lambda, tuning.lambda_min_ratio);
  }
  const CvResult cv = cv_lasso_ols(X, y, grid, tuning.K, seed);
  LambdaGrid prefix;
  prefix.values.assign(grid.values.begin(),
                       grid.values.begin() + cv.optimal_index + 1);
  const auto path = lasso_path(X, y, prefix);
  const AdjustmentFit& lasso_fit = path.back();
  try {
    return fit_ols(X, y, lasso_fit.support);
  } catch (const ComputeError&) {
    return lasso_fit;
  }
}

}  // namespace

const std::vector<std::string>& DiagnosticsReport::not_estimable() {
  static const std::vector<std::string> names = {"eta", "M", "C", "xi"};
  return names;
}

Eigen::VectorXd fourth_moments(const Eigen::MatrixXd& X) {
  if (X.rows() < 2) throw InputError("fourth_moments: need n >= 2");
  const Eigen::RowVectorXd xbar = X.colwise().mean();
  Eigen::VectorXd out(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    out[j] = (X.col(j).array() - xbar[j]).pow(4).mean();
  }
  return out;
}

std::vector<int> bootstrap_support(const ExperimentSample& sample,
                                   bool treated_group, int B, double threshold,
                                   const LassoTuning& tuning, std::uint64_t seed) {
  if (B < 1) throw InputError("bootstrap_support: B must be >= 1");
  const auto rows =
      treated_group ? sample.treated_indices() : sample.control_indices();
  if (rows.empty()) throw InputError("bootstrap_support: empty group");
  const Eigen::MatrixXd X_g = sample.covariate_rows(rows);
  const Eigen::VectorXd y_g = sample.observed_at(rows);
  const int n_g = static_cast<int>(rows.size());
  const int p = sample.p();

  CounterRng row_rng(derive_seed(seed, treated_group ? kGroupTagTreatedDiag
                                                     : kGroupTagControlDiag),
                     kStreamBootstrapRows);
  std::vector<int> selection_count(static_cast<std::size_t>(p), 0);
  int failures = 0;
  Eigen::MatrixXd Xb(n_g, p);
  Eigen::VectorXd yb(n_g);
  for (int d = 0; d < B; ++d) {
    for (int i = 0; i < n_g; ++i) {
      const int pick = static_cast<int>(row_rng.next_below(static_cast<std::uint64_t>(n_g)));
      Xb.row(i) = X_g.row(pick);
      yb[i] = y_g[pick];
    }
    try {
      LassoTuning t = tuning;
      t.seed = derive_seed(seed, static_cast<std::uint64_t>(d));
      const AdjustmentFit fit = lasso_ols_fit(Xb, yb, t, t.seed);
      for (int j : fit.support) ++selection_count[static_cast<std::size_t>(j)];
    } catch (const Error&) {
      ++failures;
    }
  }
  if (failures * 10 > B) {
    throw ComputeError("bootstrap_support: " + std::to_string(failures) + " of " +
                       std::to_string(B) + " resamples failed (> 10%)");
  }
  const int successes = B - failures;
  std::vector<int> support;
  for (int j = 0; j < p; ++j) {
    const double frac = successes > 0
        ? static_cast<double>(selection_count[static_cast<std::size_t>(j)]) / successes
        : 0.0;
    if (frac > threshold) support.push_back(j);
  }
  return support;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> estimate_residuals(
    const ExperimentSample& sample, const std::vector<int>& S) {
  const auto ia = sample.treated_indices();
  const auto ib = sample.control_indices();
  if (static_cast<int>(S.size()) >=
      std::min(static_cast<int>(ia.size()), static_cast<int>(ib.size()))) {
    throw InputError("estimate_residuals: |S| must be below both group sizes");
  }
  auto group_residuals = [&](const std::vector<int>& rows) {
    const Eigen::MatrixXd X_g = sample.covariate_rows(rows);
    const Eigen::VectorXd y_g = sample.observed_at(rows);
    const AdjustmentFit fit = fit_ols(X_g, y_g, S);
    Eigen::VectorXd resid(y_g.size());
    for (Eigen::Index i = 0; i < y_g.size(); ++i) {
      resid[i] = y_g[i] - fit.predict(X_g.row(i).transpose());
    }
    return resid;
  };
  return {group_residuals(ia), group_residuals(ib)};
}

double estimate_delta_n(const ExperimentSample& sample,
                        const Eigen::VectorXd& e_a, const Eigen::VectorXd& e_b) {
  const auto ia = sample.treated_indices();
  const auto ib = sample.control_indices();
  if (e_a.size() != static_cast<Eigen::Index>(ia.size()) ||
      e_b.size() != static_cast<Eigen::Index>(ib.size())) {
    throw InputError("estimate_delta_n: residual lengths do not match groups");
  }
  const Eigen::RowVectorXd xbar = sample.covariates.colwise().mean();

  auto group_max = [&](const std::vector<int>& rows, const Eigen::VectorXd& e) {
    const double ebar = e.mean();
    double worst = 0.0;
    for (Eigen::Index j = 0; j < sample.covariates.cols(); ++j) {
      double cov = 0.0;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        cov += (sample.covariates(rows[r], j) - xbar[j]) *
               (e[static_cast<Eigen::Index>(r)] - ebar);
      }
      worst = std::max(worst, std::abs(cov / static_cast<double>(rows.size())));
    }
    return worst;
  };
  return std::max(group_max(ia, e_a), group_max(ib, e_b));
}

double scaling_statistic(int s, int p, int n) {
  if (s < 0) throw InputError("scaling_statistic: s must be >= 0");
  if (p < 2) throw InputError("scaling_statistic: p must be >= 2");
  if (n < 1) throw InputError("scaling_statistic: n must be >= 1");
  return static_cast<double>(s) * std::log(static_cast<double>(p)) /
         std::sqrt(static_cast<double>(n));
}

std::pair<double, double> gram_eigenvalues(const Eigen::MatrixXd& X,
                                           const std::vector<int>& S) {
  if (S.empty()) throw InputError("gram_eigenvalues: S must be nonempty");
  if (static_cast<Eigen::Index>(S.size()) > X.rows()) {
    throw InputError("gram_eigenvalues: |S| exceeds the number of rows");
  }
  const int k = static_cast<int>(S.size());
  Eigen::MatrixXd Xs(X.rows(), k);
  for (int c = 0; c < k; ++c) {
    const int j = S[static_cast<std::size_t>(c)];
    if (j < 0 || j >= X.cols()) {
      throw InputError("gram_eigenvalues: column index out of range");
    }
    Xs.col(c) = X.col(j).array() - X.col(j).mean();
  }
  const Eigen::MatrixXd G =
      Xs.transpose() * Xs / static_cast<double>(X.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(G);
  if (solver.info() != Eigen::Success) {
    throw ComputeError("gram_eigenvalues: eigensolver failed");
  }
  const auto& ev = solver.eigenvalues();
  return {ev.minCoeff(), ev.maxCoeff()};
}

DiagnosticsReport run_diagnostics(const ExperimentSample& sample,
                                  const DiagnosticsOptions& opts,
                                  std::uint64_t seed) {
  DiagnosticsReport rep;
  rep.fourth_moments = fourth_moments(sample.covariates);
  rep.max_fourth_moment = rep.fourth_moments.maxCoeff();
  for (Eigen::Index j = 0; j < rep.fourth_moments.size(); ++j) {
    if (rep.fourth_moments[j] > opts.fourth_moment_flag) {
      rep.flagged_fourth_moment.push_back(static_cast<int>(j));
    }
  }

  const auto s_a = bootstrap_support(sample, true, opts.bootstrap_resamples,
                                     opts.selection_threshold, opts.tuning, seed);
  const auto s_b = bootstrap_support(sample, false, opts.bootstrap_resamples,
                                     opts.selection_threshold, opts.tuning, seed);
  std::set<int> s_union(s_a.begin(), s_a.end());
  s_union.insert(s_b.begin(), s_b.end());
  rep.estimated_support.assign(s_union.begin(), s_union.end());
  rep.support_size = static_cast<int>(rep.estimated_support.size());

  const auto [e_a, e_b] = estimate_residuals(sample, rep.estimated_support);
  rep.resid_second_moment_treated = e_a.squaredNorm() / e_a.size();
  rep.resid_second_moment_control = e_b.squaredNorm() / e_b.size();
  rep.delta_n_hat = estimate_delta_n(sample, e_a, e_b);
  rep.scaling_stat = scaling_statistic(rep.support_size, sample.p(), sample.n());
  rep.scaling_flagged = rep.scaling_stat > opts.scaling_flag;
  if (!rep.estimated_support.empty()) {
    rep.gram_eigs_on_support =
        gram_eigenvalues(sample.covariates, rep.estimated_support);
  }
  rep.p_A = static_cast<double>(sample.n_treated()) / sample.n();
  rep.tau = massart_tau(rep.p_A);
  return rep;
}

}  // namespace atelasso
