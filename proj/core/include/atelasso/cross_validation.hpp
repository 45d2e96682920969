#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "atelasso/lasso.hpp"

namespace atelasso {

/// Balanced random K-fold assignment; fold sizes differ by at most one.
struct FoldAssignment {
  std::vector<int> fold_of;  // values in 0..K-1, one per row
  int K = 0;
  std::uint64_t seed = 0;
};

FoldAssignment kfold_partition(int n_g, int K, std::uint64_t seed);

struct CvResult {
  LambdaGrid grid;
  std::vector<double> cv_error;    // length J, fold mean of per_fold_error
  double optimal_lambda = 0.0;
  int optimal_index = 0;
  Eigen::MatrixXd per_fold_error;  // J x K
  /// cv(Lasso+OLS) only: count of (fold, lambda) refits that fell back to the
  /// Lasso coefficients (rank-deficient or oversized support).
  int refit_fallbacks = 0;
};

/// K-fold CV of the Lasso over `grid`: per fold, the solution path is fit on
/// the other K-1 folds (warm-started in decreasing lambda order) and scored
/// by held-out mean squared prediction error, predicting with the training
/// split's means folded into the intercept. Ties in the CV error are broken
/// toward the larger lambda.
CvResult cv_lasso(const Eigen::MatrixXd& X_g, const Eigen::VectorXd& y_g,
                  const LambdaGrid& grid, int K = 10, std::uint64_t seed = 0);

/// K-fold CV of the full select-then-refit pipeline: per fold and lambda, the
/// Lasso support is computed on the training split and an OLS refit
/// restricted to it is scored on the held-out fold. When the support equals
/// the one at the previous grid value the previous refit is reused; below the
/// first grid value the support is empty and the refit is the zero vector.
/// Refits that are rank-deficient (or have support >= training size) fall
/// back to the Lasso coefficients and are counted in refit_fallbacks.
CvResult cv_lasso_ols(const Eigen::MatrixXd& X_g, const Eigen::VectorXd& y_g,
                      const LambdaGrid& grid, int K = 10, std::uint64_t seed = 0);

/// Both CV criteria from a single pass over the per-fold solution paths.
/// Identical to calling cv_lasso and cv_lasso_ols with the same arguments.
struct CvPair {
  CvResult lasso;
  CvResult lasso_ols;
};
CvPair cv_lasso_pair(const Eigen::MatrixXd& X_g, const Eigen::VectorXd& y_g,
                     const LambdaGrid& grid, int K = 10, std::uint64_t seed = 0);

}  // namespace atelasso
