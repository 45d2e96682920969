#include <benchmark/benchmark.h>

#include "atelasso/lasso.hpp"
#include "atelasso/rng.hpp"

namespace {

struct Problem {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

Problem make_problem(int n, int p, int s) {
  atelasso::CounterRng rng(42, 1);
  Eigen::MatrixXd X(n, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) X(i, j) = rng.next_normal();
  }
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  for (int j = 0; j < s; ++j) beta[j] = rng.next_student_t(3);
  Eigen::VectorXd y = X * beta;
  for (int i = 0; i < n; ++i) y[i] += rng.next_normal();
  return {std::move(X), std::move(y)};
}

void BM_fit_lasso(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int p = static_cast<int>(state.range(1));
  const Problem prob = make_problem(n, p, 10);
  const double lmax = atelasso::lasso_lambda_max(prob.X, prob.y);
  for (auto _ : state) {
    auto fit = atelasso::fit_lasso(prob.X, prob.y, 0.1 * lmax);
    benchmark::DoNotOptimize(fit.beta.data());
  }
}

void BM_lasso_path(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int p = static_cast<int>(state.range(1));
  const Problem prob = make_problem(n, p, 10);
  const auto grid = atelasso::lambda_grid(prob.X, prob.y, 100);
  for (auto _ : state) {
    auto fits = atelasso::lasso_path(prob.X, prob.y, grid);
    benchmark::DoNotOptimize(fits.back().beta.data());
  }
}

void BM_fit_ols(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int p = static_cast<int>(state.range(1));
  const Problem prob = make_problem(n, p, p);
  for (auto _ : state) {
    auto fit = atelasso::fit_ols(prob.X, prob.y);
    benchmark::DoNotOptimize(fit.beta.data());
  }
}

}  // namespace

BENCHMARK(BM_fit_lasso)->Args({125, 50})->Args({125, 500})->Args({1000, 50});
BENCHMARK(BM_lasso_path)->Args({125, 50})->Args({125, 500});
BENCHMARK(BM_fit_ols)->Args({125, 50})->Args({1000, 50});

BENCHMARK_MAIN();
