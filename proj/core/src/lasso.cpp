#include "atelasso/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace atelasso {

namespace {

struct CenteredProblem {
  Eigen::MatrixXd X;        // column-centered design
  Eigen::VectorXd y;        // centered outcome
  Eigen::VectorXd col_var;  // (1/n) ||x_j||^2 of the centered columns
  Eigen::VectorXd xbar;
  double ybar = 0.0;
  int n = 0;
  int p = 0;
};

CenteredProblem center_problem(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() != y.size()) {
    throw InputError("lasso: X rows and y length differ");
  }
  if (X.rows() < 2) {
    throw InputError("lasso: need at least 2 rows in the group");
  }
  if (!X.allFinite() || !y.allFinite()) {
    throw InputError("lasso: non-finite entries in X or y");
  }
  CenteredProblem c;
  c.n = static_cast<int>(X.rows());
  c.p = static_cast<int>(X.cols());
  c.xbar = X.colwise().mean();
  c.ybar = y.mean();
  c.X = X.rowwise() - c.xbar.transpose();
  c.y = y.array() - c.ybar;
  c.col_var = c.X.colwise().squaredNorm() / static_cast<double>(c.n);
  return c;
}

double penalized_objective(const CenteredProblem& c, const Eigen::VectorXd& r,
                           const Eigen::VectorXd& beta, double lambda) {
  return 0.5 * r.squaredNorm() / static_cast<double>(c.n) +
         lambda * beta.lpNorm<1>();
}

/// One pass of cyclic coordinate descent over `idx`; returns the largest
/// absolute coefficient change. `r` is the running residual y - X beta.
double cd_sweep(const CenteredProblem& c, double lambda, Eigen::VectorXd& beta,
                Eigen::VectorXd& r, const std::vector<int>& idx) {
  const double n_inv = 1.0 / static_cast<double>(c.n);
  double max_delta = 0.0;
  for (int j : idx) {
    const double v = c.col_var[j];
    if (v <= 0.0) continue;  // constant column: pinned at zero
    const double bj = beta[j];
    const double z = n_inv * c.X.col(j).dot(r) + v * bj;
    const double nb = soft_threshold(z, lambda) / v;
    if (nb != bj) {
      r.noalias() -= c.X.col(j) * (nb - bj);
      beta[j] = nb;
      max_delta = std::max(max_delta, std::abs(nb - bj));
    }
  }
  return max_delta;
}

double kkt_residual(const CenteredProblem& c, const Eigen::VectorXd& beta,
                    const Eigen::VectorXd& r, double lambda) {
  const Eigen::VectorXd g = c.X.transpose() * r / static_cast<double>(c.n);
  double worst = 0.0;
  for (int j = 0; j < c.p; ++j) {
    double viol;
    if (beta[j] != 0.0) {
      viol = std::abs(g[j] - lambda * (beta[j] > 0.0 ? 1.0 : -1.0));
    } else {
      viol = std::max(std::abs(g[j]) - lambda, 0.0);
    }
    worst = std::max(worst, viol);
  }
  return worst;
}

std::vector<int> support_of(const Eigen::VectorXd& beta) {
  std::vector<int> s;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    if (beta[j] != 0.0) s.push_back(static_cast<int>(j));
  }
  return s;
}

AdjustmentFit make_fit(const CenteredProblem& c, Eigen::VectorXd beta, double lambda) {
  AdjustmentFit fit;
  fit.support = support_of(beta);
  fit.beta = std::move(beta);
  fit.lambda = lambda;
  fit.group_outcome_mean = c.ybar;
  fit.group_covariate_mean = c.xbar;
  fit.n_group = c.n;
  return fit;
}

/// Coordinate descent on the centered problem; `beta` carries the warm start
/// in and the solution out. Throws ConvergenceError past the sweep budget.
void cd_solve(const CenteredProblem& c, double lambda, Eigen::VectorXd& beta,
              const LassoOptions& opts) {
  if (!(lambda > 0.0)) throw InputError("fit_lasso: lambda must be positive");

  std::vector<int> all(static_cast<std::size_t>(c.p));
  for (int j = 0; j < c.p; ++j) all[static_cast<std::size_t>(j)] = j;

  Eigen::VectorXd r = c.y;
  bool warm = false;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    if (beta[j] != 0.0) { warm = true; break; }
  }
  if (warm) r.noalias() -= c.X * beta;

  auto record = [&] {
    if (opts.objective_trace) {
      opts.objective_trace->push_back(penalized_objective(c, r, beta, lambda));
    }
  };

  // Stationarity is the exit condition, checked after every full sweep:
  // ill-conditioned fits can keep drifting along nearly flat directions long
  // after the KKT residual (the actual contract) is within tolerance.
  const double exit_kkt = opts.kkt_tol;
  double tol = opts.tol;
  int sweeps = 0;
  while (sweeps < opts.max_iter) {
    const double delta = cd_sweep(c, lambda, beta, r, all);
    ++sweeps;
    record();
    if (kkt_residual(c, beta, r, lambda) <= exit_kkt) return;
    // Work the active set between full sweeps.
    std::vector<int> active = support_of(beta);
    double d = delta;
    int inner = 0;
    while (d > tol && inner < 64 && sweeps < opts.max_iter && !active.empty()) {
      d = cd_sweep(c, lambda, beta, r, active);
      ++sweeps;
      ++inner;
      record();
    }
    if (d <= tol) tol = std::max(tol * 0.1, 1e-16);
  }

  const double kkt = kkt_residual(c, beta, r, lambda);
  throw ConvergenceError(
      "fit_lasso: no convergence after " + std::to_string(sweeps) +
          " sweeps (KKT residual " + std::to_string(kkt) +
          "); consider loosening the tolerances",
      make_fit(c, beta, lambda), kkt);
}

}  // namespace

LambdaGrid LambdaGrid::single(double value) {
  if (!(value > 0.0)) throw InputError("LambdaGrid: values must be positive");
  return LambdaGrid{{value}};
}

void LambdaGrid::validate() const {
  if (values.empty()) throw InputError("LambdaGrid: empty grid");
  for (std::size_t j = 0; j < values.size(); ++j) {
    if (!(values[j] > 0.0) || !std::isfinite(values[j])) {
      throw InputError("LambdaGrid: values must be positive and finite");
    }
    if (j > 0 && !(values[j] < values[j - 1])) {
      throw InputError("LambdaGrid: values must be strictly decreasing");
    }
  }
}

double lasso_lambda_max(const Eigen::MatrixXd& X_g, const Eigen::VectorXd& y_g) {
  const CenteredProblem c = center_problem(X_g, y_g);
  // Per-column dots, matching the solver's gradient expression bit for bit so
  // that a fit at exactly lambda_max stays at zero.
  const double n_inv = 1.0 / static_cast<double>(c.n);
  double lmax = 0.0;
  for (int j = 0; j < c.p; ++j) {
    lmax = std::max(lmax, std::abs(n_inv * c.X.col(j).dot(c.y)));
  }
  return lmax;
}

LambdaGrid lambda_grid(const Eigen::MatrixXd& X_g, const Eigen::VectorXd& y_g,
                       int J, double ratio) {
  if (J < 2) throw InputError("lambda_grid: J must be at least 2");
  const double lmax = lasso_lambda_max(X_g, y_g);
  if (lmax <= 0.0) {
    throw ComputeError("lambda_grid: degenerate grid, centered outcome is "
                       "uncorrelated with every column (lambda_max = 0)");
  }
  if (ratio <= 0.0) {
    ratio = (X_g.cols() >= X_g.rows()) ? 1e-3 : 1e-4;
  }
  if (ratio >= 1.0) throw InputError("lambda_grid: ratio must lie in (0,1)");

  LambdaGrid grid;
  grid.values.resize(static_cast<std::size_t>(J));
  grid.values.front() = lmax;
  grid.values.back() = ratio * lmax;
  const double step = std::log(ratio) / static_cast<double>(J - 1);
  for (int j = 1; j < J - 1; ++j) {
    grid.values[static_cast<std::size_t>(j)] = lmax * std::exp(step * j);
  }
  grid.validate();
  return grid;
}

AdjustmentFit fit_lasso(const Eigen::MatrixXd& X_g, const Eigen::VectorXd& y_g,
                        double lambda, const LassoOptions& opts) {
  const CenteredProblem c = center_problem(X_g, y_g);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(c.p);
  cd_solve(c, lambda, beta, opts);
  return make_fit(c, std::move(beta), lambda);
}

std::vector<AdjustmentFit> lasso_path(const Eigen::MatrixXd& X_g,
                                      const Eigen::VectorXd& y_g,
                                      const LambdaGrid& grid,
                                      const LassoOptions& opts) {
  grid.validate();
  const CenteredProblem c = center_problem(X_g, y_g);
  std::vector<AdjustmentFit> fits;
  fits.reserve(grid.size());
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(c.p);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    try {
      cd_solve(c, grid.values[j], beta, opts);
    } catch (const ConvergenceError& e) {
      throw ConvergenceError("lasso_path: grid index " + std::to_string(j) +
                                 " (lambda = " + std::to_string(grid.values[j]) +
                                 "): " + e.what(),
                             e.last_iterate, e.kkt_residual);
    }
    fits.push_back(make_fit(c, beta, grid.values[j]));
  }
  return fits;
}

AdjustmentFit fit_ols(const Eigen::MatrixXd& X_g, const Eigen::VectorXd& y_g,
                      const std::optional<std::vector<int>>& support) {
  const CenteredProblem c = center_problem(X_g, y_g);

  std::vector<int> cols;
  if (support) {
    cols = *support;
    std::sort(cols.begin(), cols.end());
    cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
    for (int j : cols) {
      if (j < 0 || j >= c.p) {
        throw InputError("fit_ols: support index " + std::to_string(j) +
                         " out of range");
      }
    }
  } else {
    cols.resize(static_cast<std::size_t>(c.p));
    for (int j = 0; j < c.p; ++j) cols[static_cast<std::size_t>(j)] = j;
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(c.p);
  const int k = static_cast<int>(cols.size());
  if (k > 0) {
    if (k >= c.n) {
      throw ComputeError("fit_ols: refit ill-posed, |support| = " +
                         std::to_string(k) + " >= group size " +
                         std::to_string(c.n));
    }
    Eigen::MatrixXd Xs(c.n, k);
    for (int r = 0; r < k; ++r) {
      Xs.col(r) = c.X.col(cols[static_cast<std::size_t>(r)]);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xs);
    const int rank = static_cast<int>(qr.rank());
    if (rank < k) {
      // Columns pivoted past the rank are linearly dependent on the rest.
      const auto& perm = qr.colsPermutation().indices();
      std::string offenders;
      for (int r = rank; r < k; ++r) {
        if (!offenders.empty()) offenders += ", ";
        offenders += std::to_string(cols[static_cast<std::size_t>(perm[r])]);
      }
      throw ComputeError("fit_ols: rank-deficient design, dependent column(s): " +
                         offenders);
    }
    const Eigen::VectorXd beta_s = qr.solve(c.y);
    for (int r = 0; r < k; ++r) {
      beta[cols[static_cast<std::size_t>(r)]] = beta_s[r];
    }
  }

  return make_fit(c, std::move(beta), 0.0);
}

double kkt_check(const AdjustmentFit& fit, const Eigen::MatrixXd& X_g,
                 const Eigen::VectorXd& y_g, double lambda) {
  const CenteredProblem c = center_problem(X_g, y_g);
  if (fit.beta.size() != c.p) {
    throw InputError("kkt_check: beta length does not match X columns");
  }
  const Eigen::VectorXd r = c.y - c.X * fit.beta;
  return kkt_residual(c, fit.beta, r, lambda);
}

double lasso_objective(const Eigen::MatrixXd& X_g, const Eigen::VectorXd& y_g,
                       const Eigen::VectorXd& beta, double lambda) {
  const CenteredProblem c = center_problem(X_g, y_g);
  if (beta.size() != c.p) {
    throw InputError("lasso_objective: beta length does not match X columns");
  }
  const Eigen::VectorXd r = c.y - c.X * beta;
  return penalized_objective(c, r, beta, lambda);
}

}  // namespace atelasso
