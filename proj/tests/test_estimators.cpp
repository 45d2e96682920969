#include <doctest.h>

#include <cmath>

#include "atelasso/estimators.hpp"
#include "atelasso/rng.hpp"
#include "atelasso/stats.hpp"
#include "atelasso/simulation.hpp"

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

ExperimentSample toy_sample() {
  // Units 0,1 treated with outcomes (3,5); units 2,3 control with (1,1).
  Eigen::MatrixXd X = random_matrix(4, 2, 1);
  Eigen::VectorXi t(4);
  t << 1, 1, 0, 0;
  Eigen::VectorXd y(4);
  y << 3, 5, 1, 1;
  return ExperimentSample::create(std::move(X), std::move(t), std::move(y));
}

ExperimentSample random_sample(int n, int p, int n_a, std::uint64_t seed) {
  CounterRng rng(seed, 2);
  Eigen::MatrixXd X = random_matrix(n, p, seed);
  Eigen::VectorXi t = Eigen::VectorXi::Zero(n);
  for (int i = 0; i < n_a; ++i) t[i] = 1;
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    y[i] = (t[i] == 1 ? 1.0 : 0.0) + X(i, 0) - 0.5 * X(i, p > 1 ? 1 : 0) +
           rng.next_normal();
  }
  return ExperimentSample::create(std::move(X), std::move(t), std::move(y));
}

AdjustmentFit fit_with_beta(const ExperimentSample& sample, bool treated,
                            Eigen::VectorXd beta) {
  const auto idx = treated ? sample.treated_indices() : sample.control_indices();
  AdjustmentFit fit;
  fit.beta = std::move(beta);
  for (Eigen::Index j = 0; j < fit.beta.size(); ++j) {
    if (fit.beta[j] != 0.0) fit.support.push_back(static_cast<int>(j));
  }
  fit.group_outcome_mean = sample.observed_at(idx).mean();
  fit.group_covariate_mean = sample.covariate_rows(idx).colwise().mean();
  fit.n_group = static_cast<int>(idx.size());
  return fit;
}

}  // namespace

TEST_CASE("unadjusted estimate and variance on the worked example") {
  const auto sample = toy_sample();
  const auto rep = ate_unadjusted(sample);
  CHECK(rep.estimate == doctest::Approx(3.0));
  // (n/n_A) s2_A + (n/n_B) s2_B = (4/2)(2) + (4/2)(0) = 4.
  CHECK(rep.sigma2_hat == doctest::Approx(4.0));
  CHECK(rep.ci_low <= rep.estimate);
  CHECK(rep.estimate <= rep.ci_high);
}

TEST_CASE("constant outcomes give a zero-width interval") {
  Eigen::MatrixXd X = random_matrix(6, 1, 3);
  Eigen::VectorXi t(6);
  t << 1, 1, 1, 0, 0, 0;
  Eigen::VectorXd y(6);
  y << 2, 2, 2, 1, 1, 1;
  const auto rep =
      ate_unadjusted(ExperimentSample::create(std::move(X), std::move(t), std::move(y)));
  CHECK(rep.estimate == doctest::Approx(1.0));
  CHECK(rep.sigma2_hat == 0.0);
  CHECK(rep.ci_low == rep.estimate);
  CHECK(rep.ci_high == rep.estimate);
}

TEST_CASE("groups of size one are rejected") {
  Eigen::MatrixXd X = random_matrix(3, 1, 4);
  Eigen::VectorXi t(3);
  t << 1, 0, 0;
  Eigen::VectorXd y(3);
  y << 1, 2, 3;
  const auto sample = ExperimentSample::create(std::move(X), std::move(t), std::move(y));
  CHECK_THROWS_AS(ate_unadjusted(sample), InputError);
}

TEST_CASE("zero adjustment vectors reduce to the unadjusted estimate") {
  const auto sample = random_sample(30, 4, 12, 5);
  const auto zero_a = fit_with_beta(sample, true, Eigen::VectorXd::Zero(4));
  const auto zero_b = fit_with_beta(sample, false, Eigen::VectorXd::Zero(4));
  CHECK(ate_adjusted(sample, zero_a, zero_b) ==
        doctest::Approx(ate_unadjusted(sample).estimate).epsilon(1e-14));
}

TEST_CASE("balanced covariates zero out the adjustment for any beta") {
  // Mirror the covariates so group means equal the full mean exactly.
  const int half = 10, p = 3;
  Eigen::MatrixXd X(2 * half, p);
  const Eigen::MatrixXd base = random_matrix(half, p, 6);
  X.topRows(half) = base;
  X.bottomRows(half) = base;
  Eigen::VectorXi t(2 * half);
  Eigen::VectorXd y(2 * half);
  CounterRng rng(7, 1);
  for (int i = 0; i < 2 * half; ++i) {
    t[i] = i < half ? 1 : 0;
    y[i] = rng.next_normal();
  }
  const auto sample = ExperimentSample::create(std::move(X), std::move(t), std::move(y));
  CounterRng beta_rng(8, 1);
  Eigen::VectorXd beta(p);
  for (int j = 0; j < p; ++j) beta[j] = beta_rng.next_normal();
  const auto fa = fit_with_beta(sample, true, beta);
  const auto fb = fit_with_beta(sample, false, -2.0 * beta);
  CHECK(ate_adjusted(sample, fa, fb) ==
        doctest::Approx(ate_unadjusted(sample).estimate).epsilon(1e-12));
}

TEST_CASE("adjusted estimator equals the imputation form") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto sample = random_sample(24, 3, 10, 100 + seed);
    CounterRng rng(200 + seed, 1);
    Eigen::VectorXd beta_a(3), beta_b(3);
    for (int j = 0; j < 3; ++j) {
      beta_a[j] = rng.next_normal();
      beta_b[j] = rng.next_normal();
    }
    const auto fa = fit_with_beta(sample, true, beta_a);
    const auto fb = fit_with_beta(sample, false, beta_b);
    const double adj = ate_adjusted(sample, fa, fb);

    // Imputation form: impute each group's unobserved mean from the other.
    const auto ia = sample.treated_indices();
    const auto ib = sample.control_indices();
    const double n_a = static_cast<double>(ia.size());
    const double n_b = static_cast<double>(ib.size());
    const double n = n_a + n_b;
    const Eigen::VectorXd xbar_a = sample.covariate_rows(ia).colwise().mean();
    const Eigen::VectorXd xbar_b = sample.covariate_rows(ib).colwise().mean();
    const double abar_a = sample.observed_at(ia).mean();
    const double bbar_b = sample.observed_at(ib).mean();
    const double abar_b_hat = abar_a + (xbar_b - xbar_a).dot(beta_a);
    const double bbar_a_hat = bbar_b + (xbar_a - xbar_b).dot(beta_b);
    const double imputed = (n_a * abar_a + n_b * abar_b_hat) / n -
                           (n_b * bbar_b + n_a * bbar_a_hat) / n;
    CHECK(adj == doctest::Approx(imputed).epsilon(1e-12));
  }
}

TEST_CASE("ate_ols is exact when outcomes are linear with equal slopes") {
  const int n = 30, p = 2;
  const Eigen::MatrixXd X = random_matrix(n, p, 9);
  Eigen::VectorXi t = Eigen::VectorXi::Zero(n);
  for (int i = 0; i < 11; ++i) t[i] = 1;  // imbalanced groups
  Eigen::VectorXd beta(p);
  beta << 2.0, -1.0;
  Eigen::VectorXd y(n);
  double true_ate_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double a_i = 3.0 + X.row(i).dot(beta);       // treated potential outcome
    const double b_i = 1.0 + X.row(i).dot(beta);       // control potential outcome
    y[i] = t[i] == 1 ? a_i : b_i;
    true_ate_sum += a_i - b_i;
  }
  const auto sample = ExperimentSample::create(X, std::move(t), std::move(y));
  const auto rep = ate_ols(sample);
  CHECK(rep.estimate == doctest::Approx(true_ate_sum / n).epsilon(1e-10));
  CHECK(rep.sigma2_hat <= 1e-18);
}

TEST_CASE("ate_ols with no covariates equals the unadjusted estimate") {
  Eigen::MatrixXd X(10, 0);
  Eigen::VectorXi t(10);
  Eigen::VectorXd y(10);
  CounterRng rng(10, 1);
  for (int i = 0; i < 10; ++i) {
    t[i] = i < 4 ? 1 : 0;
    y[i] = rng.next_normal();
  }
  const auto sample = ExperimentSample::create(std::move(X), std::move(t), std::move(y));
  CHECK(ate_ols(sample).estimate ==
        doctest::Approx(ate_unadjusted(sample).estimate).epsilon(1e-14));
}

TEST_CASE("ate_ols matches an independent two-regression oracle") {
  const auto sample = random_sample(20, 2, 9, 11);
  const auto rep = ate_ols(sample);

  auto group_beta = [&](bool treated) {
    const auto idx = treated ? sample.treated_indices() : sample.control_indices();
    const Eigen::MatrixXd Xg = sample.covariate_rows(idx);
    const Eigen::VectorXd yg = sample.observed_at(idx);
    const Eigen::MatrixXd Xc = Xg.rowwise() - Xg.colwise().mean();
    const Eigen::VectorXd yc = yg.array() - yg.mean();
    return Eigen::VectorXd((Xc.transpose() * Xc).ldlt().solve(Xc.transpose() * yc));
  };
  const Eigen::VectorXd ba = group_beta(true);
  const Eigen::VectorXd bb = group_beta(false);
  const auto ia = sample.treated_indices();
  const auto ib = sample.control_indices();
  const Eigen::VectorXd xbar = sample.covariates.colwise().mean();
  const Eigen::VectorXd xbar_a = sample.covariate_rows(ia).colwise().mean();
  const Eigen::VectorXd xbar_b = sample.covariate_rows(ib).colwise().mean();
  const double oracle =
      (sample.observed_at(ia).mean() - (xbar_a - xbar).dot(ba)) -
      (sample.observed_at(ib).mean() - (xbar_b - xbar).dot(bb));
  CHECK(rep.estimate == doctest::Approx(oracle).epsilon(1e-10));
}

TEST_CASE("ate_ols refuses p >= min group size, advising the Lasso") {
  const auto sample = random_sample(20, 9, 9, 12);
  CHECK_THROWS_WITH_AS(ate_ols(sample), doctest::Contains("Lasso"), ComputeError);
}

TEST_CASE("pinned singleton grids revert both Lasso estimators to unadjusted") {
  const auto sample = random_sample(40, 5, 18, 13);
  LassoTuning tuning;
  tuning.n_lambda = 1;  // grid = [lambda_max] for each group
  tuning.K = 5;
  tuning.seed = 21;

  const auto unadj = ate_unadjusted(sample);
  const auto lasso = ate_lasso(sample, tuning);
  CHECK(lasso.estimate == doctest::Approx(unadj.estimate).epsilon(1e-14));
  CHECK(*lasso.selected_treated == 0);
  CHECK(*lasso.selected_control == 0);
  // With empty supports (df = 1) the variance is exactly the unadjusted one.
  CHECK(lasso.sigma2_hat == doctest::Approx(unadj.sigma2_hat).epsilon(1e-12));

  const auto lasso_ols = ate_lasso_ols(sample, tuning);
  CHECK(lasso_ols.estimate == doctest::Approx(unadj.estimate).epsilon(1e-14));
  CHECK(lasso_ols.sigma2_hat == doctest::Approx(unadj.sigma2_hat).epsilon(1e-12));
}

TEST_CASE("full-support refit makes ate_lasso_ols equal ate_ols") {
  // Strong dense signal on p = 2 covariates: the CV-selected support is
  // {0, 1} for both groups, so the refit is the full OLS fit.
  const int n = 60, p = 2;
  const Eigen::MatrixXd X = random_matrix(n, p, 14);
  Eigen::VectorXi t = Eigen::VectorXi::Zero(n);
  for (int i = 0; i < 30; ++i) t[i] = 1;
  Eigen::VectorXd y(n);
  CounterRng rng(15, 1);
  for (int i = 0; i < n; ++i) {
    y[i] = (t[i] == 1 ? 2.0 : 0.0) + 3.0 * X(i, 0) - 4.0 * X(i, 1) +
           0.05 * rng.next_normal();
  }
  const auto sample = ExperimentSample::create(X, std::move(t), std::move(y));
  LassoTuning tuning;
  tuning.K = 5;
  tuning.seed = 33;
  const auto rep = ate_lasso_ols(sample, tuning);
  REQUIRE(*rep.selected_treated == 2);
  REQUIRE(*rep.selected_control == 2);
  CHECK(rep.estimate == doctest::Approx(ate_ols(sample).estimate).epsilon(1e-9));
}

TEST_CASE("neyman variance with zero betas equals the unadjusted formula") {
  const auto sample = random_sample(26, 3, 11, 16);
  const auto za = fit_with_beta(sample, true, Eigen::VectorXd::Zero(3));
  const auto zb = fit_with_beta(sample, false, Eigen::VectorXd::Zero(3));
  CHECK(neyman_variance_adjusted(sample, za, zb, true) ==
        doctest::Approx(ate_unadjusted(sample).sigma2_hat).epsilon(1e-14));
}

TEST_CASE("neyman variance is zero for exactly linear outcomes") {
  const int n = 20, p = 2;
  const Eigen::MatrixXd X = random_matrix(n, p, 17);
  Eigen::VectorXi t = Eigen::VectorXi::Zero(n);
  for (int i = 0; i < 9; ++i) t[i] = 1;
  Eigen::VectorXd beta(p);
  beta << 1.0, 2.0;
  Eigen::VectorXd y = X * beta;
  const auto sample = ExperimentSample::create(X, std::move(t), std::move(y));
  const auto fa = fit_ols(sample.covariate_rows(sample.treated_indices()),
                          sample.observed_at(sample.treated_indices()));
  const auto fb = fit_ols(sample.covariate_rows(sample.control_indices()),
                          sample.observed_at(sample.control_indices()));
  CHECK(neyman_variance_adjusted(sample, fa, fb, true) <= 1e-18);
}

TEST_CASE("df adjustment scales each group term by n_g / (n_g - df)") {
  // Equal group sizes and equal support sizes, so the ratio factors out.
  const int n = 24, p = 3;
  const auto sample = random_sample(n, p, 12, 18);
  Eigen::VectorXd beta(p);
  beta << 0.5, -0.25, 0.0;
  const auto fa = fit_with_beta(sample, true, beta);
  const auto fb = fit_with_beta(sample, false, beta);
  REQUIRE(fa.df() == fb.df());
  const double adjusted = neyman_variance_adjusted(sample, fa, fb, true);
  const double unadjusted = neyman_variance_adjusted(sample, fa, fb, false);
  const double n_g = 12.0;
  CHECK(adjusted ==
        doctest::Approx(unadjusted * n_g / (n_g - fa.df())).epsilon(1e-12));
}

TEST_CASE("df exceeding a group size raises the documented error") {
  const auto sample = random_sample(8, 5, 4, 19);
  Eigen::VectorXd beta = Eigen::VectorXd::Ones(5);
  const auto fa = fit_with_beta(sample, true, beta);   // df = 6 > n_A = 4
  const auto fb = fit_with_beta(sample, false, beta);
  CHECK_THROWS_WITH_AS(neyman_variance_adjusted(sample, fa, fb, true),
                       doctest::Contains("df_adjust"), ComputeError);
  CHECK(neyman_variance_adjusted(sample, fa, fb, false) >= 0.0);
}

TEST_CASE("report standard error ties the interval to the variance") {
  const auto sample = random_sample(30, 2, 14, 23);
  const auto rep = ate_unadjusted(sample, 0.95);
  CHECK(rep.n == 30);
  CHECK(rep.std_error() == doctest::Approx(std::sqrt(rep.sigma2_hat / 30)));
  CHECK(rep.ci_high - rep.estimate ==
        doctest::Approx(two_sided_z(0.95) * rep.std_error()).epsilon(1e-12));
}

TEST_CASE("confidence interval quantiles and scaling") {
  const auto [lo0, hi0] = confidence_interval(1.5, 0.0, 100, 0.95);
  CHECK(lo0 == 1.5);
  CHECK(hi0 == 1.5);

  const int n = 37;
  const auto [lo, hi] = confidence_interval(2.0, static_cast<double>(n), n, 0.95);
  CHECK(lo == doctest::Approx(2.0 - 1.959964).epsilon(1e-6));
  CHECK(hi == doctest::Approx(2.0 + 1.959964).epsilon(1e-6));

  const auto [lo1, hi1] = confidence_interval(0.0, 4.0, 16, 0.9);
  const auto [lo2, hi2] = confidence_interval(0.0, 16.0, 16, 0.9);
  CHECK((hi2 - lo2) == doctest::Approx(2.0 * (hi1 - lo1)).epsilon(1e-12));
}

TEST_CASE("adding a constant to treated outcomes shifts every estimate by it") {
  const int n = 36, p = 4;
  const auto base = random_sample(n, p, 16, 20);
  const double c = 2.75;
  Eigen::VectorXd shifted = base.observed;
  for (int i = 0; i < n; ++i) {
    if (base.assignment[i] == 1) shifted[i] += c;
  }
  const auto moved =
      ExperimentSample::create(base.covariates, base.assignment, shifted);

  LassoTuning tuning;
  tuning.K = 4;
  tuning.seed = 55;
  tuning.n_lambda = 25;

  CHECK(ate_unadjusted(moved).estimate ==
        doctest::Approx(ate_unadjusted(base).estimate + c).epsilon(1e-12));
  CHECK(ate_ols(moved).estimate ==
        doctest::Approx(ate_ols(base).estimate + c).epsilon(1e-12));
  CHECK(ate_lasso(moved, tuning).estimate ==
        doctest::Approx(ate_lasso(base, tuning).estimate + c).epsilon(1e-12));
  CHECK(ate_lasso_ols(moved, tuning).estimate ==
        doctest::Approx(ate_lasso_ols(base, tuning).estimate + c).epsilon(1e-12));
}

TEST_CASE("fused lasso reports equal the standalone estimators") {
  const auto sample = random_sample(44, 6, 20, 21);
  LassoTuning tuning;
  tuning.K = 4;
  tuning.seed = 77;
  tuning.n_lambda = 30;
  const auto both = ate_lasso_both(sample, tuning);
  const auto lone = ate_lasso(sample, tuning);
  const auto lone_ols = ate_lasso_ols(sample, tuning);
  CHECK(both.first.estimate == lone.estimate);
  CHECK(both.first.sigma2_hat == lone.sigma2_hat);
  CHECK(both.second.estimate == lone_ols.estimate);
  CHECK(both.second.sigma2_hat == lone_ols.sigma2_hat);
}

TEST_CASE("neyman conservativeness over the full assignment distribution") {
  // Small population, zero adjustment: the mean of sigma2_hat/n over all
  // assignments dominates the exact estimator variance, with equality only
  // under a constant treatment effect.
  auto build_pop = [](bool constant_effect, std::uint64_t seed) {
    const int n = 8;
    CounterRng rng(seed, 3);
    Eigen::MatrixXd X = random_matrix(n, 2, seed);
    Eigen::VectorXd a(n), b(n);
    for (int i = 0; i < n; ++i) {
      b[i] = rng.next_normal();
      a[i] = constant_effect ? b[i] + 1.5 : b[i] + rng.next_normal();
    }
    return Population::create(std::move(X), std::move(a), std::move(b));
  };

  for (bool constant_effect : {true, false}) {
    const auto pop = build_pop(constant_effect, constant_effect ? 30 : 31);
    const int n_A = 4;
    double mean_sigma2_over_n = 0.0;
    std::vector<double> estimates;
    for_each_assignment(pop.n(), n_A, [&](const Eigen::VectorXi& t) {
      const auto rep = ate_unadjusted(reveal(pop, t));
      mean_sigma2_over_n += rep.sigma2_hat / pop.n();
      estimates.push_back(rep.estimate);
    });
    const double count = static_cast<double>(estimates.size());
    mean_sigma2_over_n /= count;
    double mean_est = 0.0;
    for (double e : estimates) mean_est += e;
    mean_est /= count;
    double exact_var = 0.0;
    for (double e : estimates) exact_var += (e - mean_est) * (e - mean_est);
    exact_var /= count;

    CHECK(mean_sigma2_over_n >= exact_var - 1e-12);
    if (constant_effect) {
      CHECK(mean_sigma2_over_n == doctest::Approx(exact_var).epsilon(1e-9));
    } else {
      CHECK(mean_sigma2_over_n > exact_var + 1e-6);
    }
  }
}
