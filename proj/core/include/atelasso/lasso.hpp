#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "atelasso/errors.hpp"

namespace atelasso {

/// One group's fitted adjustment. The intercept is implicit: predictions are
/// group_outcome_mean + (x - group_covariate_mean)' beta, matching the
/// group-centered least-squares objective the fit minimizes.
struct AdjustmentFit {
  Eigen::VectorXd beta;                      // length p
  std::vector<int> support;                  // sorted indices with beta != 0
  double lambda = 0.0;                       // 0 for pure OLS
  double group_outcome_mean = 0.0;
  Eigen::VectorXd group_covariate_mean;      // length p
  int n_group = 0;

  /// Degrees of freedom used by the variance estimate: |support| + 1.
  int df() const { return static_cast<int>(support.size()) + 1; }

  double predict(const Eigen::VectorXd& x) const {
    return group_outcome_mean + (x - group_covariate_mean).dot(beta);
  }
};

/// Strictly decreasing positive regularization values. Grids built by
/// lambda_grid() start at lambda_max and are log-spaced; singleton grids are
/// allowed when constructed directly (pinning the solver to one value).
struct LambdaGrid {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  static LambdaGrid single(double value);
  void validate() const;  // throws InputError on violations
};

struct LassoOptions {
  double tol = 1e-7;        // max coordinate-wise change per sweep
  int max_iter = 100000;    // sweep budget
  double kkt_tol = 1e-5;    // final stationarity requirement
  /// When set, receives the penalized objective value after every sweep.
  std::vector<double>* objective_trace = nullptr;
};

/// Non-convergence after the sweep budget; carries the last iterate so the
/// caller can inspect it or retry with a looser tolerance.
class ConvergenceError : public ComputeError {
public:
  ConvergenceError(std::string message, AdjustmentFit last_iterate, double kkt_residual)
      : ComputeError(std::move(message)),
        last_iterate(std::move(last_iterate)),
        kkt_residual(kkt_residual) {}

  AdjustmentFit last_iterate;
  double kkt_residual;
};

/// sign(z) * max(|z| - gamma, 0).
inline double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

/// Smallest lambda whose solution is the zero vector:
/// max_j |(1/n_g) sum_i (x_ij - xbar_j)(y_i - ybar)|.
double lasso_lambda_max(const Eigen::MatrixXd& X_g, const Eigen::VectorXd& y_g);

/// Log-spaced grid from lambda_max down to ratio * lambda_max (J values).
/// ratio <= 0 selects the default: 1e-3 when p >= n_g, else 1e-4.
/// Throws ComputeError when lambda_max is zero (constant centered outcome).
LambdaGrid lambda_grid(const Eigen::MatrixXd& X_g, const Eigen::VectorXd& y_g,
                       int J = 100, double ratio = 0.0);

/// Group-centered Lasso: minimizes
///   (1/(2 n_g)) sum_i (y_i - ybar - (x_i - xbar)' beta)^2 + lambda * |beta|_1
/// by cyclic coordinate descent with active-set iterations. The returned fit
/// satisfies kkt_check(fit) <= opts.kkt_tol or a ConvergenceError is thrown.
/// Constant columns within the group get their coefficient pinned to 0.
AdjustmentFit fit_lasso(const Eigen::MatrixXd& X_g, const Eigen::VectorXd& y_g,
                        double lambda, const LassoOptions& opts = {});

/// Solution path over a decreasing grid, warm-starting each value from the
/// previous one. Errors are annotated with the offending grid index.
std::vector<AdjustmentFit> lasso_path(const Eigen::MatrixXd& X_g,
                                      const Eigen::VectorXd& y_g,
                                      const LambdaGrid& grid,
                                      const LassoOptions& opts = {});

/// Unpenalized group-centered least squares, optionally restricted to a
/// support set (coefficients outside it are exactly zero). Rank-deficient
/// designs throw a ComputeError naming the dependent columns.
AdjustmentFit fit_ols(const Eigen::MatrixXd& X_g, const Eigen::VectorXd& y_g,
                      const std::optional<std::vector<int>>& support = std::nullopt);

/// Maximum KKT violation of `fit` for the group-centered objective:
/// |g_j - lambda * sign(beta_j)| on the support, max(|g_j| - lambda, 0) off it,
/// where g_j is the centered gradient coordinate.
double kkt_check(const AdjustmentFit& fit, const Eigen::MatrixXd& X_g,
                 const Eigen::VectorXd& y_g, double lambda);

/// Value of the penalized group-centered objective at `beta`.
double lasso_objective(const Eigen::MatrixXd& X_g, const Eigen::VectorXd& y_g,
                       const Eigen::VectorXd& beta, double lambda);

}  // namespace atelasso
