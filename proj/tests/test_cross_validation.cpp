#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "atelasso/cross_validation.hpp"
#include "atelasso/rng.hpp"

using namespace atelasso;

namespace {

Eigen::MatrixXd random_matrix(int n, int p, std::uint64_t seed) {
  CounterRng rng(seed, 0);
  Eigen::MatrixXd X(n, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) X(i, j) = rng.next_normal();
  }
  return X;
}

std::vector<int> fold_sizes(const FoldAssignment& f) {
  std::vector<int> sizes(static_cast<std::size_t>(f.K), 0);
  for (int fold : f.fold_of) ++sizes[static_cast<std::size_t>(fold)];
  return sizes;
}

/// Null-model CV error computed from scratch: per fold, the held-out MSE of
/// predicting with the training split's mean.
double oracle_null_cv_error(const Eigen::VectorXd& y, const FoldAssignment& f) {
  double total = 0.0;
  for (int k = 0; k < f.K; ++k) {
    double train_sum = 0.0;
    int train_n = 0;
    for (int i = 0; i < y.size(); ++i) {
      if (f.fold_of[static_cast<std::size_t>(i)] != k) {
        train_sum += y[i];
        ++train_n;
      }
    }
    const double train_mean = train_sum / train_n;
    double sse = 0.0;
    int test_n = 0;
    for (int i = 0; i < y.size(); ++i) {
      if (f.fold_of[static_cast<std::size_t>(i)] == k) {
        const double d = y[i] - train_mean;
        sse += d * d;
        ++test_n;
      }
    }
    total += sse / test_n;
  }
  return total / f.K;
}

}  // namespace

TEST_CASE("kfold partition balance and determinism") {
  const auto f1 = kfold_partition(10, 5, 42);
  CHECK(fold_sizes(f1) == std::vector<int>{2, 2, 2, 2, 2});

  const auto f2 = kfold_partition(10, 3, 42);
  auto sizes = fold_sizes(f2);
  std::sort(sizes.begin(), sizes.end(), std::greater<>());
  CHECK(sizes == std::vector<int>{4, 3, 3});

  const auto f3 = kfold_partition(10, 3, 42);
  CHECK(f2.fold_of == f3.fold_of);
  const auto f4 = kfold_partition(10, 3, 43);
  CHECK(f2.fold_of != f4.fold_of);

  CHECK_THROWS_AS(kfold_partition(5, 6, 0), InputError);
  CHECK_THROWS_AS(kfold_partition(5, 1, 0), InputError);
}

TEST_CASE("partitions are roughly uniform over fold memberships") {
  // Index 0 should land in each of 4 folds about equally often across seeds.
  int counts[4] = {0, 0, 0, 0};
  const int trials = 4000;
  for (int s = 0; s < trials; ++s) {
    ++counts[static_cast<std::size_t>(kfold_partition(12, 4, s).fold_of[0])];
  }
  for (int c : counts) {
    CHECK(static_cast<double>(c) / trials == doctest::Approx(0.25).epsilon(0.1));
  }
}

TEST_CASE("singleton grid well above lambda_max reduces to the null model") {
  const int n = 40;
  const Eigen::MatrixXd X = random_matrix(n, 5, 1);
  CounterRng rng(2, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = X(i, 0) + rng.next_normal();

  const double big = 10.0 * lasso_lambda_max(X, y);
  const auto grid = LambdaGrid::single(big);
  const std::uint64_t seed = 7;
  const auto res = cv_lasso(X, y, grid, 5, seed);
  REQUIRE(res.cv_error.size() == 1);
  CHECK(res.optimal_lambda == big);
  CHECK(res.optimal_index == 0);
  const double oracle = oracle_null_cv_error(y, kfold_partition(n, 5, seed));
  CHECK(res.cv_error[0] == doctest::Approx(oracle).epsilon(1e-12));

  // cv(Lasso+OLS) coincides with cv(Lasso) when every support is empty.
  const auto refit = cv_lasso_ols(X, y, grid, 5, seed);
  CHECK(refit.cv_error[0] == res.cv_error[0]);
  CHECK(refit.per_fold_error == res.per_fold_error);
  CHECK(refit.refit_fallbacks == 0);
}

TEST_CASE("singleton grid at the full-group lambda_max is near the null model") {
  const int n = 60;
  const Eigen::MatrixXd X = random_matrix(n, 4, 3);
  CounterRng rng(4, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = 2.0 * X(i, 1) + rng.next_normal();

  const double lmax = lasso_lambda_max(X, y);
  const auto res = cv_lasso(X, y, LambdaGrid::single(lmax), 10, 11);
  CHECK(res.optimal_lambda == lmax);
  // Fold-level lambda_max can exceed the full-group value slightly, so the
  // fold fits need not be exactly empty; the error still hugs the null model.
  const double oracle = oracle_null_cv_error(y, kfold_partition(n, 10, 11));
  CHECK(res.cv_error[0] == doctest::Approx(oracle).epsilon(0.05));
}

TEST_CASE("noiseless linear outcome drives CV to the smallest lambda") {
  const int n = 50;
  const Eigen::MatrixXd X = random_matrix(n, 2, 5);
  const Eigen::VectorXd y = 1.5 * X.col(0) - 2.0 * X.col(1);
  const auto grid = lambda_grid(X, y, 30);
  const auto res = cv_lasso(X, y, grid, 5, 9);
  CHECK(res.optimal_index == static_cast<int>(grid.size()) - 1);
  CHECK(res.optimal_lambda == grid.values.back());
  CHECK(res.cv_error.back() < res.cv_error.front());
}

TEST_CASE("leave-one-out cv_error is invariant to row order") {
  const int n = 16;
  const Eigen::MatrixXd X = random_matrix(n, 3, 6);
  CounterRng rng(7, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = X(i, 2) + 0.5 * rng.next_normal();
  const auto grid = lambda_grid(X, y, 8);

  const auto base = cv_lasso(X, y, grid, n, 3);

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  CounterRng shuffle(8, 1);
  for (int i = n - 1; i > 0; --i) {
    std::swap(perm[i], perm[shuffle.next_below(i + 1)]);
  }
  Eigen::MatrixXd Xp(n, 3);
  Eigen::VectorXd yp(n);
  for (int i = 0; i < n; ++i) {
    Xp.row(i) = X.row(perm[i]);
    yp[i] = y[perm[i]];
  }
  const auto permuted = cv_lasso(Xp, yp, grid, n, 3);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    CHECK(base.cv_error[j] == doctest::Approx(permuted.cv_error[j]).epsilon(1e-12));
  }
}

TEST_CASE("cv_error is exactly the fold mean of per_fold_error") {
  const int n = 45;
  const Eigen::MatrixXd X = random_matrix(n, 6, 9);
  CounterRng rng(10, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = X(i, 0) - X(i, 3) + rng.next_normal();
  const auto grid = lambda_grid(X, y, 12);
  const auto res = cv_lasso(X, y, grid, 5, 13);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    CHECK(res.cv_error[j] ==
          doctest::Approx(res.per_fold_error.row(static_cast<Eigen::Index>(j)).mean())
              .epsilon(1e-15));
  }
  // Tie-break sanity: optimal index attains the minimum.
  for (double e : res.cv_error) CHECK(res.cv_error[static_cast<std::size_t>(res.optimal_index)] <= e);
}

TEST_CASE("unchanged support reuses the previous refit exactly") {
  // Single covariate: once selected, the support is {0} for every smaller
  // lambda, so all later refits must be bitwise identical to the first.
  const int n = 30;
  const Eigen::MatrixXd X = random_matrix(n, 1, 14);
  CounterRng rng(15, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = 3.0 * X(i, 0) + 0.1 * rng.next_normal();

  const double lmax = lasso_lambda_max(X, y);
  LambdaGrid grid;
  grid.values = {0.5 * lmax, 0.45 * lmax, 0.4 * lmax};
  const auto res = cv_lasso_ols(X, y, grid, 5, 17);
  for (int k = 0; k < 5; ++k) {
    CHECK(res.per_fold_error(0, k) == res.per_fold_error(1, k));
    CHECK(res.per_fold_error(1, k) == res.per_fold_error(2, k));
  }
  CHECK(res.refit_fallbacks == 0);
}

TEST_CASE("cv(Lasso+OLS) recovers an exact sparse support across seeds") {
  // s = 2 active covariates out of p = 10, light noise, n = 100. The grid is
  // floored at 0.02 * lambda_max: the signal coefficients are ~20 noise SDs,
  // so the floor sits well below both entry points while keeping the plain
  // CV argmin out of the deep-overfit region.
  const int n = 100, p = 10;
  int recovered = 0;
  const int runs = 20;
  for (std::uint64_t seed = 0; seed < runs; ++seed) {
    const Eigen::MatrixXd X = random_matrix(n, p, 300 + seed);
    CounterRng rng(400 + seed, 1);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      y[i] = 2.0 * X(i, 2) - 1.5 * X(i, 7) + 0.1 * rng.next_normal();
    }
    const auto grid = lambda_grid(X, y, 50, 0.02);
    const auto res = cv_lasso_ols(X, y, grid, 10, seed);
    LambdaGrid prefix;
    prefix.values.assign(grid.values.begin(),
                         grid.values.begin() + res.optimal_index + 1);
    const auto path = lasso_path(X, y, prefix);
    if (path.back().support == std::vector<int>{2, 7}) ++recovered;
  }
  CHECK(recovered >= 19);  // >= 95% of seeded runs
}

TEST_CASE("the true 2-subset oracle confirms the selected support") {
  // Enumerate every 2-subset, score held-out MSE of its OLS refit with fixed
  // folds, and confirm the true support wins.
  const int n = 100, p = 10;
  const Eigen::MatrixXd X = random_matrix(n, p, 500);
  CounterRng rng(501, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    y[i] = 2.0 * X(i, 2) - 1.5 * X(i, 7) + 0.1 * rng.next_normal();
  }
  const auto folds = kfold_partition(n, 5, 99);

  auto heldout_of_subset = [&](int a, int b) {
    double total = 0.0;
    for (int k = 0; k < 5; ++k) {
      std::vector<int> train, test;
      for (int i = 0; i < n; ++i) {
        (folds.fold_of[static_cast<std::size_t>(i)] == k ? test : train).push_back(i);
      }
      Eigen::MatrixXd Xt(train.size(), 2);
      Eigen::VectorXd yt(train.size());
      for (std::size_t r = 0; r < train.size(); ++r) {
        Xt(static_cast<Eigen::Index>(r), 0) = X(train[r], a);
        Xt(static_cast<Eigen::Index>(r), 1) = X(train[r], b);
        yt[static_cast<Eigen::Index>(r)] = y[train[r]];
      }
      const Eigen::MatrixXd Xc = Xt.rowwise() - Xt.colwise().mean();
      const Eigen::VectorXd yc = yt.array() - yt.mean();
      const Eigen::Vector2d beta =
          (Xc.transpose() * Xc).ldlt().solve(Xc.transpose() * yc);
      double sse = 0.0;
      for (int i : test) {
        const double pred = yt.mean() +
                            (X(i, a) - Xt.col(0).mean()) * beta[0] +
                            (X(i, b) - Xt.col(1).mean()) * beta[1];
        sse += (y[i] - pred) * (y[i] - pred);
      }
      total += sse / static_cast<double>(test.size());
    }
    return total / 5.0;
  };

  double best = 1e300;
  std::pair<int, int> best_pair{-1, -1};
  for (int a = 0; a < p; ++a) {
    for (int b = a + 1; b < p; ++b) {
      const double v = heldout_of_subset(a, b);
      if (v < best) {
        best = v;
        best_pair = {a, b};
      }
    }
  }
  CHECK(best_pair == std::pair<int, int>{2, 7});
}

TEST_CASE("cv results are deterministic and the fused pass matches") {
  const int n = 50, p = 8;
  const Eigen::MatrixXd X = random_matrix(n, p, 600);
  CounterRng rng(601, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = X(i, 1) + 0.7 * rng.next_normal();
  const auto grid = lambda_grid(X, y, 20);

  const auto r1 = cv_lasso(X, y, grid, 5, 77);
  const auto r2 = cv_lasso(X, y, grid, 5, 77);
  CHECK(r1.cv_error == r2.cv_error);
  CHECK(r1.per_fold_error == r2.per_fold_error);
  CHECK(r1.optimal_lambda == r2.optimal_lambda);

  const auto ro = cv_lasso_ols(X, y, grid, 5, 77);
  const auto pair = cv_lasso_pair(X, y, grid, 5, 77);
  CHECK(pair.lasso.per_fold_error == r1.per_fold_error);
  CHECK(pair.lasso.optimal_index == r1.optimal_index);
  CHECK(pair.lasso_ols.per_fold_error == ro.per_fold_error);
  CHECK(pair.lasso_ols.optimal_index == ro.optimal_index);
  CHECK(pair.lasso_ols.refit_fallbacks == ro.refit_fallbacks);
}

TEST_CASE("singular refits fall back to the Lasso coefficients") {
  // Two columns whose correlation exceeds 1 - 1e-12, with a signal component
  // along their (tiny) difference: at small lambda the Lasso activates both,
  // the restricted Gram is numerically singular, and the refit must fall back
  // instead of aborting the whole cross-validation.
  const int n = 50, p = 5;
  Eigen::MatrixXd X = random_matrix(n, p, 900);
  const Eigen::VectorXd w = random_matrix(n, 1, 990).col(0);
  X.col(1) = X.col(0) + 1e-6 * w;
  CounterRng rng(950, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    y[i] = 2.0 * X(i, 0) + 1.5 * X(i, 1) + 1e-5 * w[i] + 0.01 * rng.next_normal();
  }
  const auto grid = lambda_grid(X, y, 60, 1e-5);
  const auto res = cv_lasso_ols(X, y, grid, 5, 0);
  CHECK(res.refit_fallbacks > 0);  // recorded, not fatal
  for (double e : res.cv_error) CHECK(std::isfinite(e));
}
