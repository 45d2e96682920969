#include "atelasso/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "atelasso/rng.hpp"
#include "atelasso/stats.hpp"

namespace atelasso {

namespace {

// Stream tags for the independent draws of one population / replication.
constexpr std::uint64_t kStreamCovariates = 1;
constexpr std::uint64_t kStreamCoefficients = 2;
constexpr std::uint64_t kStreamHidden = 3;
constexpr std::uint64_t kStreamNoise = 4;
constexpr std::uint64_t kStreamAssignment = 5;
constexpr std::uint64_t kStreamBootstrap = 6;
constexpr std::uint64_t kStreamTail = 7;

Eigen::MatrixXd correlated_normal_rows(int n, int p, double rho, CounterRng& rng) {
  Eigen::MatrixXd Z(n, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) Z(i, j) = rng.next_normal();
  }
  if (rho == 0.0) return Z;
  const Eigen::MatrixXd L =
      Eigen::LLT<Eigen::MatrixXd>(toeplitz_covariance(p, rho)).matrixL();
  return Z * L.transpose();
}

double noise_draw(ErrorFamily family, CounterRng& rng) {
  switch (family) {
    case ErrorFamily::gaussian: return rng.next_normal();
    case ErrorFamily::t1: return rng.next_student_t(1);
    case ErrorFamily::t3: return rng.next_student_t(3);
  }
  return rng.next_normal();
}

int default_threads() {
  if (const char* env = std::getenv("ATELASSO_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

struct StatBundle {
  double bias, sd, rmse, coverage, mean_len;
  double mean_sel_t, mean_sel_c;
};

/// Statistics of one (re)sample of replication records for a single method.
StatBundle compute_stats(const std::vector<const ReplicationRecord*>& recs,
                         double true_ate, bool has_selection) {
  StatBundle s{};
  const double m = static_cast<double>(recs.size());
  double sum = 0.0, sum_sq_err = 0.0, n_covered = 0.0, len = 0.0;
  double sel_t = 0.0, sel_c = 0.0;
  for (const auto* r : recs) {
    sum += r->estimate;
    const double err = r->estimate - true_ate;
    sum_sq_err += err * err;
    n_covered += r->covered ? 1.0 : 0.0;
    len += r->ci_high - r->ci_low;
    if (has_selection) {
      sel_t += static_cast<double>(r->selected_treated.value_or(0));
      sel_c += static_cast<double>(r->selected_control.value_or(0));
    }
  }
  const double mean_est = sum / m;
  s.bias = mean_est - true_ate;
  double ss = 0.0;
  for (const auto* r : recs) {
    const double d = r->estimate - mean_est;
    ss += d * d;
  }
  s.sd = std::sqrt(ss / m);
  s.rmse = std::sqrt(sum_sq_err / m);
  s.coverage = n_covered / m;
  s.mean_len = len / m;
  s.mean_sel_t = sel_t / m;
  s.mean_sel_c = sel_c / m;
  return s;
}

MethodSummary summarize_method(const std::vector<ReplicationRecord>& all,
                               Method method, double true_ate,
                               int bootstrap_resamples, std::uint64_t seed) {
  std::vector<const ReplicationRecord*> ok;
  int failures = 0;
  bool has_selection = false;
  for (const auto& r : all) {
    if (r.method != method) continue;
    if (r.failed) {
      ++failures;
      continue;
    }
    ok.push_back(&r);
    if (r.selected_treated.has_value()) has_selection = true;
  }
  MethodSummary out;
  out.failures = failures;
  out.replications_used = static_cast<int>(ok.size());
  if (ok.empty()) return out;

  const StatBundle point = compute_stats(ok, true_ate, has_selection);
  out.bias = point.bias;
  out.sd = point.sd;
  out.rmse = point.rmse;
  out.coverage = point.coverage;
  out.mean_ci_length = point.mean_len;
  if (has_selection) {
    out.mean_selected_treated = point.mean_sel_t;
    out.mean_selected_control = point.mean_sel_c;
  }

  if (bootstrap_resamples > 0 && ok.size() > 1) {
    CounterRng rng(derive_seed(seed, static_cast<std::uint64_t>(method)),
                   kStreamBootstrap);
    std::vector<StatBundle> bs;
    bs.reserve(static_cast<std::size_t>(bootstrap_resamples));
    std::vector<const ReplicationRecord*> resample(ok.size());
    for (int b = 0; b < bootstrap_resamples; ++b) {
      for (auto& slot : resample) {
        slot = ok[static_cast<std::size_t>(rng.next_below(ok.size()))];
      }
      bs.push_back(compute_stats(resample, true_ate, has_selection));
    }
    auto se_of = [&](double StatBundle::* member) {
      double mean = 0.0;
      for (const auto& v : bs) mean += v.*member;
      mean /= static_cast<double>(bs.size());
      double ss = 0.0;
      for (const auto& v : bs) {
        const double d = v.*member - mean;
        ss += d * d;
      }
      return std::sqrt(ss / static_cast<double>(bs.size() - 1));
    };
    out.se_bias = se_of(&StatBundle::bias);
    out.se_sd = se_of(&StatBundle::sd);
    out.se_rmse = se_of(&StatBundle::rmse);
    out.se_coverage = se_of(&StatBundle::coverage);
    out.se_mean_ci_length = se_of(&StatBundle::mean_len);
    if (has_selection) {
      out.se_mean_selected_treated = se_of(&StatBundle::mean_sel_t);
      out.se_mean_selected_control = se_of(&StatBundle::mean_sel_c);
    }
  }
  return out;
}

ReplicationRecord record_from_report(int r, const AteReport& rep, double true_ate) {
  ReplicationRecord rec;
  rec.replication = r;
  rec.method = rep.method;
  rec.estimate = rep.estimate;
  rec.sigma2_hat = rep.sigma2_hat;
  rec.ci_low = rep.ci_low;
  rec.ci_high = rep.ci_high;
  rec.covered = rep.ci_low <= true_ate && true_ate <= rep.ci_high;
  rec.selected_treated = rep.selected_treated;
  rec.selected_control = rep.selected_control;
  return rec;
}

ReplicationRecord failed_record(int r, Method m, const std::string& why) {
  ReplicationRecord rec;
  rec.replication = r;
  rec.method = m;
  rec.failed = true;
  rec.error = why;
  return rec;
}

}  // namespace

const char* error_family_name(ErrorFamily f) {
  switch (f) {
    case ErrorFamily::gaussian: return "gaussian";
    case ErrorFamily::t1: return "t1";
    case ErrorFamily::t3: return "t3";
  }
  return "unknown";
}

ErrorFamily error_family_from_name(const std::string& name) {
  if (name == "gaussian") return ErrorFamily::gaussian;
  if (name == "t1") return ErrorFamily::t1;
  if (name == "t3") return ErrorFamily::t3;
  throw InputError("unknown error family '" + name +
                   "' (expected gaussian, t1 or t3)");
}

void SimulationConfig::validate() const {
  if (n < 2) throw InputError("config: n must be at least 2");
  if (p < 1) throw InputError("config: p must be at least 1");
  if (s < 0 || s > p) throw InputError("config: need 0 <= s <= p");
  if (!(rho >= 0.0 && rho < 1.0)) throw InputError("config: rho must lie in [0,1)");
  if (n_A < 1 || n_A > n - 1) throw InputError("config: need 1 <= n_A <= n-1");
  if (replications < 1) throw InputError("config: replications must be >= 1");
  if (!(ci_level > 0.0 && ci_level < 1.0)) {
    throw InputError("config: ci_level must lie in (0,1)");
  }
  if (noise_scale < 0.0) throw InputError("config: noise_scale must be >= 0");
  if (methods.empty()) throw InputError("config: no methods requested");
  if (bootstrap_resamples < 0) {
    throw InputError("config: bootstrap_resamples must be nonnegative");
  }
}

Eigen::VectorXi complete_randomization(int n, int n_A, std::uint64_t seed) {
  if (n_A < 1 || n_A > n - 1) {
    throw InputError("complete_randomization: need 1 <= n_A <= n-1");
  }
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  CounterRng rng(seed, kStreamAssignment);
  // Partial Fisher-Yates: the first n_A slots are a uniform random subset.
  for (int i = 0; i < n_A; ++i) {
    const int j = i + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  Eigen::VectorXi assignment = Eigen::VectorXi::Zero(n);
  for (int i = 0; i < n_A; ++i) assignment[idx[static_cast<std::size_t>(i)]] = 1;
  return assignment;
}

Eigen::MatrixXd toeplitz_covariance(int p, double rho) {
  Eigen::MatrixXd S(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) {
      S(i, j) = std::pow(rho, std::abs(i - j));
    }
  }
  return S;
}

Population generate_population(const SimulationConfig& config) {
  config.validate();
  const int n = config.n;
  const int p = config.p;
  const int s = config.s;

  CounterRng rng_x(config.seed, kStreamCovariates);
  const Eigen::MatrixXd X = correlated_normal_rows(n, p, config.rho, rng_x);

  // Active coefficients; the control coefficients are coupled to the treated
  // ones by fresh t3 increments.
  CounterRng rng_b(config.seed, kStreamCoefficients);
  Eigen::VectorXd beta_a1(s), beta_a2(s), beta_b1(s), beta_b2(s);
  for (int j = 0; j < s; ++j) {
    beta_a1[j] = rng_b.next_student_t(3);
    beta_a2[j] = 0.1 * rng_b.next_student_t(3);
    beta_b1[j] = beta_a1[j] + rng_b.next_student_t(3);
    beta_b2[j] = beta_a2[j] + 0.1 * rng_b.next_student_t(3);
  }
  if (config.linear_only) {
    beta_a2.setZero();
    beta_b2.setZero();
  }

  Eigen::VectorXd eps_a = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd eps_b = Eigen::VectorXd::Zero(n);
  if (config.hidden_covariates && s > 0) {
    CounterRng rng_z(config.seed, kStreamHidden);
    const Eigen::MatrixXd Z = correlated_normal_rows(n, s, config.rho, rng_z);
    eps_a = Z * beta_a1;
    eps_b = Z * beta_b1;
  }
  CounterRng rng_e(config.seed, kStreamNoise);
  for (int i = 0; i < n; ++i) {
    eps_a[i] += config.noise_scale * noise_draw(config.error_family, rng_e);
    eps_b[i] += config.noise_scale * noise_draw(config.error_family, rng_e);
  }

  Eigen::VectorXd a(n), b(n);
  if (s > 0) {
    const auto Xs = X.leftCols(s);
    a = Xs * beta_a1 + (Xs * beta_a2).array().exp().matrix() + eps_a;
    b = Xs * beta_b1 + (Xs * beta_b2).array().exp().matrix() + eps_b;
  } else {
    a = Eigen::VectorXd::Ones(n) + eps_a;
    b = Eigen::VectorXd::Ones(n) + eps_b;
  }
  return Population::create(X, std::move(a), std::move(b));
}

MonteCarloSummary run_monte_carlo(const Population& pop,
                                  const SimulationConfig& config, int threads) {
  config.validate();
  if (pop.n() != config.n || pop.p() != config.p) {
    throw InputError("run_monte_carlo: population does not match config");
  }
  if (threads <= 0) threads = default_threads();
  const int R = config.replications;
  const int n_methods = static_cast<int>(config.methods.size());

  MonteCarloSummary summary;
  summary.true_ate = pop.true_ate;
  summary.records.resize(static_cast<std::size_t>(R) * n_methods);

  const bool want_lasso =
      std::find(config.methods.begin(), config.methods.end(), Method::cv_lasso) !=
      config.methods.end();
  const bool want_lasso_ols =
      std::find(config.methods.begin(), config.methods.end(),
                Method::cv_lasso_ols) != config.methods.end();

  auto run_replication = [&](int r) {
    const std::uint64_t rep_seed = config.seed ^ static_cast<std::uint64_t>(r);
    const Eigen::VectorXi assignment =
        complete_randomization(config.n, config.n_A, rep_seed);
    const ExperimentSample sample = reveal(pop, assignment);

    AteReport lasso_rep, lasso_ols_rep;
    bool lasso_ok = false, lasso_ols_ok = false;
    std::string lasso_err, lasso_ols_err;
    if (want_lasso || want_lasso_ols) {
      LassoTuning tuning = config.tuning;
      tuning.seed = rep_seed;
      tuning.emit_cv = false;
      try {
        if (want_lasso && want_lasso_ols) {
          auto both = ate_lasso_both(sample, tuning, config.ci_level);
          lasso_rep = std::move(both.first);
          lasso_ols_rep = std::move(both.second);
          lasso_ok = lasso_ols_ok = true;
        } else if (want_lasso) {
          lasso_rep = ate_lasso(sample, tuning, config.ci_level);
          lasso_ok = true;
        } else {
          lasso_ols_rep = ate_lasso_ols(sample, tuning, config.ci_level);
          lasso_ols_ok = true;
        }
      } catch (const Error& e) {
        lasso_err = lasso_ols_err = e.what();
      }
    }

    for (int m = 0; m < n_methods; ++m) {
      const Method method = config.methods[static_cast<std::size_t>(m)];
      ReplicationRecord rec;
      try {
        switch (method) {
          case Method::unadjusted:
            rec = record_from_report(r, ate_unadjusted(sample, config.ci_level),
                                     pop.true_ate);
            break;
          case Method::ols:
            rec = record_from_report(r, ate_ols(sample, config.ci_level,
                                                config.tuning.df_adjust),
                                     pop.true_ate);
            break;
          case Method::cv_lasso:
            rec = lasso_ok ? record_from_report(r, lasso_rep, pop.true_ate)
                           : failed_record(r, method, lasso_err);
            break;
          case Method::cv_lasso_ols:
            rec = lasso_ols_ok
                      ? record_from_report(r, lasso_ols_rep, pop.true_ate)
                      : failed_record(r, method, lasso_ols_err);
            break;
        }
      } catch (const Error& e) {
        rec = failed_record(r, method, e.what());
      }
      summary.records[static_cast<std::size_t>(r) * n_methods + m] = std::move(rec);
    }
  };

  if (threads == 1 || R == 1) {
    for (int r = 0; r < R; ++r) run_replication(r);
  } else {
    std::atomic<int> next{0};
    auto worker = [&] {
      for (int r = next.fetch_add(1); r < R; r = next.fetch_add(1)) {
        run_replication(r);
      }
    };
    std::vector<std::thread> pool;
    const int t = std::min(threads, R);
    pool.reserve(static_cast<std::size_t>(t));
    for (int i = 0; i < t; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (Method m : config.methods) {
    summary.methods.emplace_back(
        m, summarize_method(summary.records, m, pop.true_ate,
                            config.bootstrap_resamples, config.seed));
  }
  return summary;
}

double binomial_coefficient(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double c = 1.0;
  for (int i = 1; i <= k; ++i) {
    c *= static_cast<double>(n - k + i) / static_cast<double>(i);
  }
  return c;
}

void for_each_assignment(int n, int n_A,
                         const std::function<void(const Eigen::VectorXi&)>& fn) {
  if (n_A < 1 || n_A > n - 1) {
    throw InputError("for_each_assignment: need 1 <= n_A <= n-1");
  }
  std::vector<int> comb(static_cast<std::size_t>(n_A));
  for (int i = 0; i < n_A; ++i) comb[static_cast<std::size_t>(i)] = i;
  Eigen::VectorXi assignment(n);
  while (true) {
    assignment.setZero();
    for (int i : comb) assignment[i] = 1;
    fn(assignment);
    // Advance to the next combination in lexicographic order.
    int i = n_A - 1;
    while (i >= 0 && comb[static_cast<std::size_t>(i)] == n - n_A + i) --i;
    if (i < 0) break;
    ++comb[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < n_A; ++j) {
      comb[static_cast<std::size_t>(j)] = comb[static_cast<std::size_t>(j - 1)] + 1;
    }
  }
}

EnumerationResult enumerate_assignments(
    const Population& pop, int n_A,
    const std::function<AteReport(const ExperimentSample&)>& estimator) {
  const double count = binomial_coefficient(pop.n(), n_A);
  if (count > 1e6) {
    throw InputError("enumerate_assignments: C(n, n_A) = " +
                     std::to_string(count) + " exceeds the 1e6 bound");
  }
  std::vector<double> estimates;
  estimates.reserve(static_cast<std::size_t>(count));
  std::size_t covered = 0;
  for_each_assignment(pop.n(), n_A, [&](const Eigen::VectorXi& assignment) {
    const AteReport rep = estimator(reveal(pop, assignment));
    estimates.push_back(rep.estimate);
    if (rep.ci_low <= pop.true_ate && pop.true_ate <= rep.ci_high) ++covered;
  });

  EnumerationResult res;
  res.n_assignments = estimates.size();
  double sum = 0.0;
  for (double e : estimates) sum += e;
  res.mean = sum / static_cast<double>(estimates.size());
  double ss = 0.0;
  for (double e : estimates) {
    const double d = e - res.mean;
    ss += d * d;
  }
  res.variance = ss / static_cast<double>(estimates.size());
  res.ci_coverage = static_cast<double>(covered) / static_cast<double>(estimates.size());
  return res;
}

double massart_tau(double p_A) {
  const double a = 3.0 * p_A;
  const double b = 3.0 - 3.0 * p_A;
  return std::min({1.0 / 70.0, a * a / 70.0, b * b / 70.0});
}

std::vector<TailCheckRow> concentration_bound_check(
    const Eigen::VectorXd& z, int n_A, const std::vector<double>& t_grid,
    int trials, std::uint64_t seed) {
  const int n = static_cast<int>(z.size());
  if (n < 2) throw InputError("concentration_bound_check: need n >= 2");
  if (n_A < 1 || n_A > n - 1) {
    throw InputError("concentration_bound_check: need 1 <= n_A <= n-1");
  }
  for (double t : t_grid) {
    if (t < 0.0) throw InputError("concentration_bound_check: t must be >= 0");
  }

  const double zbar = z.mean();
  const double sigma2 = (z.array() - zbar).square().sum() / static_cast<double>(n);
  const double p_A = static_cast<double>(n_A) / static_cast<double>(n);
  const double tau = massart_tau(p_A);

  // Deviations of the subset mean from the population mean.
  std::vector<double> deviations;
  if (binomial_coefficient(n, n_A) <= 1e6) {
    for_each_assignment(n, n_A, [&](const Eigen::VectorXi& assignment) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        if (assignment[i] == 1) s += z[i];
      }
      deviations.push_back(s / n_A - zbar);
    });
  } else {
    if (trials < 1) throw InputError("concentration_bound_check: trials must be >= 1");
    deviations.reserve(static_cast<std::size_t>(trials));
    CounterRng rng(seed, kStreamTail);
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (int trial = 0; trial < trials; ++trial) {
      for (int i = 0; i < n_A; ++i) {
        const int j =
            i + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n - i)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
      }
      double s = 0.0;
      for (int i = 0; i < n_A; ++i) s += z[idx[static_cast<std::size_t>(i)]];
      deviations.push_back(s / n_A - zbar);
    }
  }
  std::sort(deviations.begin(), deviations.end());

  std::vector<TailCheckRow> rows;
  rows.reserve(t_grid.size());
  for (double t : t_grid) {
    TailCheckRow row;
    row.t = t;
    if (sigma2 == 0.0) {
      row.empirical = t > 0.0 ? 0.0 : 1.0;
      row.bound = t > 0.0 ? 0.0 : 1.0;
    } else {
      const auto it = std::lower_bound(deviations.begin(), deviations.end(), t);
      row.empirical = static_cast<double>(deviations.end() - it) /
                      static_cast<double>(deviations.size());
      row.bound = std::exp(-(p_A * n_A * t * t) /
                           ((1.0 + tau) * (1.0 + tau) * sigma2));
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace atelasso
