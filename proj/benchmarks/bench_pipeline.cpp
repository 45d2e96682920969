#include <benchmark/benchmark.h>

#include "atelasso/cross_validation.hpp"
#include "atelasso/estimators.hpp"
#include "atelasso/simulation.hpp"

namespace {

atelasso::SimulationConfig small_config(int p) {
  atelasso::SimulationConfig config;
  config.n = 250;
  config.p = p;
  config.s = 10;
  config.n_A = 125;
  config.seed = 7;
  return config;
}

void BM_cv_lasso_pair(benchmark::State& state) {
  const auto config = small_config(static_cast<int>(state.range(0)));
  const auto pop = atelasso::generate_population(config);
  const auto sample =
      atelasso::reveal(pop, atelasso::complete_randomization(config.n, config.n_A, 1));
  const auto idx = sample.treated_indices();
  const Eigen::MatrixXd X = sample.covariate_rows(idx);
  const Eigen::VectorXd y = sample.observed_at(idx);
  const auto grid = atelasso::lambda_grid(X, y, 100);
  for (auto _ : state) {
    auto pair = atelasso::cv_lasso_pair(X, y, grid, 10, 3);
    benchmark::DoNotOptimize(pair.lasso.optimal_lambda);
  }
}

void BM_replication(benchmark::State& state) {
  const auto config = small_config(static_cast<int>(state.range(0)));
  const auto pop = atelasso::generate_population(config);
  atelasso::LassoTuning tuning;
  std::uint64_t r = 0;
  for (auto _ : state) {
    const auto sample = atelasso::reveal(
        pop, atelasso::complete_randomization(config.n, config.n_A, r));
    tuning.seed = r++;
    auto both = atelasso::ate_lasso_both(sample, tuning);
    benchmark::DoNotOptimize(both.first.estimate);
  }
}

}  // namespace

BENCHMARK(BM_cv_lasso_pair)->Arg(50)->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_replication)->Arg(50)->Arg(500)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
