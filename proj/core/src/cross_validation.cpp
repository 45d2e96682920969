#include "atelasso/cross_validation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "atelasso/rng.hpp"

namespace atelasso {

namespace {

constexpr std::uint64_t kFoldStream = 0x6b666f6c64ULL;  // "kfold"

/// Lazily filled Gram matrix (1/n) X'X of a centered training design; only
/// the entries touched by some refit support are ever computed.
class GramCache {
public:
  explicit GramCache(const Eigen::MatrixXd& Xc)
      : Xc_(Xc),
        n_inv_(1.0 / static_cast<double>(Xc.rows())),
        p_(static_cast<int>(Xc.cols())),
        G_(Xc.cols(), Xc.cols()),
        have_(static_cast<std::size_t>(Xc.cols()) * Xc.cols(), 0) {}

  double at(int i, int j) {
    const std::size_t idx = static_cast<std::size_t>(i) * p_ + j;
    if (!have_[idx]) {
      const double v = n_inv_ * Xc_.col(i).dot(Xc_.col(j));
      G_(i, j) = v;
      G_(j, i) = v;
      have_[idx] = 1;
      have_[static_cast<std::size_t>(j) * p_ + i] = 1;
    }
    return G_(i, j);
  }

private:
  const Eigen::MatrixXd& Xc_;
  double n_inv_;
  int p_;
  Eigen::MatrixXd G_;
  std::vector<std::uint8_t> have_;
};

struct TrainSplit {
  Eigen::MatrixXd X;   // training rows, original scale
  Eigen::VectorXd y;
  Eigen::MatrixXd Xc;  // centered by training means
  Eigen::VectorXd yc;
  Eigen::VectorXd xbar;
  double ybar = 0.0;
  Eigen::VectorXd col_var;
  std::vector<int> test_rows;  // indices into the full group
};

TrainSplit make_split(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                      const FoldAssignment& folds, int k) {
  TrainSplit s;
  const int n = static_cast<int>(X.rows());
  std::vector<int> train_rows;
  for (int i = 0; i < n; ++i) {
    if (folds.fold_of[static_cast<std::size_t>(i)] == k) {
      s.test_rows.push_back(i);
    } else {
      train_rows.push_back(i);
    }
  }
  if (train_rows.size() < 2) {
    throw InputError("cv: training split has fewer than 2 rows");
  }
  s.X.resize(static_cast<Eigen::Index>(train_rows.size()), X.cols());
  s.y.resize(static_cast<Eigen::Index>(train_rows.size()));
  for (std::size_t r = 0; r < train_rows.size(); ++r) {
    s.X.row(static_cast<Eigen::Index>(r)) = X.row(train_rows[r]);
    s.y[static_cast<Eigen::Index>(r)] = y[train_rows[r]];
  }
  s.xbar = s.X.colwise().mean();
  s.ybar = s.y.mean();
  s.Xc = s.X.rowwise() - s.xbar.transpose();
  s.yc = s.y.array() - s.ybar;
  s.col_var = s.Xc.colwise().squaredNorm() / static_cast<double>(s.Xc.rows());
  return s;
}

/// Held-out MSE of a sparse coefficient vector, centering by training means.
double heldout_mse(const TrainSplit& s, const Eigen::MatrixXd& X,
                   const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                   const std::vector<int>& support) {
  double sse = 0.0;
  for (int i : s.test_rows) {
    double pred = s.ybar;
    for (int j : support) {
      pred += (X(i, j) - s.xbar[j]) * beta[j];
    }
    const double d = y[i] - pred;
    sse += d * d;
  }
  return sse / static_cast<double>(s.test_rows.size());
}

/// Coordinate descent on a pre-centered training split (same iteration as
/// fit_lasso; duplicated here to reuse the split's cached column variances).
void cd_solve_split(const TrainSplit& s, double lambda, Eigen::VectorXd& beta,
                    const LassoOptions& opts, std::size_t grid_index) {
  const int n = static_cast<int>(s.Xc.rows());
  const int p = static_cast<int>(s.Xc.cols());
  const double n_inv = 1.0 / static_cast<double>(n);

  Eigen::VectorXd r = s.yc;
  bool warm = false;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    if (beta[j] != 0.0) { warm = true; break; }
  }
  if (warm) r.noalias() -= s.Xc * beta;

  auto sweep = [&](const std::vector<int>& idx) {
    double max_delta = 0.0;
    for (int j : idx) {
      const double v = s.col_var[j];
      if (v <= 0.0) continue;
      const double bj = beta[j];
      const double z = n_inv * s.Xc.col(j).dot(r) + v * bj;
      const double nb = soft_threshold(z, lambda) / v;
      if (nb != bj) {
        r.noalias() -= s.Xc.col(j) * (nb - bj);
        beta[j] = nb;
        max_delta = std::max(max_delta, std::abs(nb - bj));
      }
    }
    return max_delta;
  };
  auto kkt = [&] {
    const Eigen::VectorXd g = s.Xc.transpose() * r * n_inv;
    double worst = 0.0;
    for (int j = 0; j < p; ++j) {
      const double viol = beta[j] != 0.0
          ? std::abs(g[j] - lambda * (beta[j] > 0.0 ? 1.0 : -1.0))
          : std::max(std::abs(g[j]) - lambda, 0.0);
      worst = std::max(worst, viol);
    }
    return worst;
  };

  std::vector<int> all(static_cast<std::size_t>(p));
  for (int j = 0; j < p; ++j) all[static_cast<std::size_t>(j)] = j;

  // Same stationarity-first loop as fit_lasso.
  const double exit_kkt = opts.kkt_tol;
  double tol = opts.tol;
  int sweeps = 0;
  while (sweeps < opts.max_iter) {
    const double delta = sweep(all);
    ++sweeps;
    if (kkt() <= exit_kkt) return;
    std::vector<int> active;
    for (int j = 0; j < p; ++j) {
      if (beta[j] != 0.0) active.push_back(j);
    }
    double d = delta;
    int inner = 0;
    while (d > tol && inner < 64 && sweeps < opts.max_iter && !active.empty()) {
      d = sweep(active);
      ++sweeps;
      ++inner;
    }
    if (d <= tol) tol = std::max(tol * 0.1, 1e-16);
  }

  AdjustmentFit last;
  last.beta = beta;
  last.lambda = lambda;
  throw ConvergenceError("cv: fold solver did not converge at grid index " +
                             std::to_string(grid_index),
                         std::move(last), kkt());
}

/// OLS refit restricted to `support` using the lazy Gram; returns false when
/// the restricted system is ill-posed or numerically rank-deficient.
bool gram_refit(const TrainSplit& s, GramCache& gram,
                const Eigen::VectorXd& xty, const std::vector<int>& support,
                Eigen::VectorXd& out) {
  const int k = static_cast<int>(support.size());
  out.setZero(s.Xc.cols());
  if (k == 0) return true;
  if (k >= static_cast<int>(s.Xc.rows())) return false;

  Eigen::MatrixXd A(k, k);
  Eigen::VectorXd b(k);
  for (int r = 0; r < k; ++r) {
    b[r] = xty[support[static_cast<std::size_t>(r)]];
    for (int c = 0; c <= r; ++c) {
      A(r, c) = gram.at(support[static_cast<std::size_t>(r)],
                        support[static_cast<std::size_t>(c)]);
      A(c, r) = A(r, c);
    }
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  if (ldlt.info() != Eigen::Success) return false;
  const Eigen::VectorXd d = ldlt.vectorD();
  const double dmax = d.maxCoeff();
  if (!(dmax > 0.0) || d.minCoeff() < 1e-12 * dmax) return false;
  const Eigen::VectorXd beta_s = ldlt.solve(b);
  if (!beta_s.allFinite()) return false;
  for (int r = 0; r < k; ++r) {
    out[support[static_cast<std::size_t>(r)]] = beta_s[r];
  }
  return true;
}

CvResult finalize(const LambdaGrid& grid, Eigen::MatrixXd per_fold, int fallbacks) {
  CvResult res;
  res.grid = grid;
  res.per_fold_error = std::move(per_fold);
  res.refit_fallbacks = fallbacks;
  const int J = static_cast<int>(grid.size());
  res.cv_error.resize(static_cast<std::size_t>(J));
  int best = 0;
  for (int j = 0; j < J; ++j) {
    res.cv_error[static_cast<std::size_t>(j)] = res.per_fold_error.row(j).mean();
    // Strict improvement only: ties resolve to the earlier (larger) lambda.
    if (res.cv_error[static_cast<std::size_t>(j)] <
        res.cv_error[static_cast<std::size_t>(best)]) {
      best = j;
    }
  }
  res.optimal_index = best;
  res.optimal_lambda = grid.values[static_cast<std::size_t>(best)];
  return res;
}

struct CvRaw {
  Eigen::MatrixXd per_fold_lasso;
  Eigen::MatrixXd per_fold_refit;
  int fallbacks = 0;
};

CvRaw cv_engine(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                const LambdaGrid& grid, int K, std::uint64_t seed,
                bool want_lasso, bool want_refit) {
  grid.validate();
  const int n = static_cast<int>(X.rows());
  const int J = static_cast<int>(grid.size());
  const FoldAssignment folds = kfold_partition(n, K, seed);
  LassoOptions opts;

  CvRaw raw;
  raw.per_fold_lasso.setZero(J, K);
  raw.per_fold_refit.setZero(J, K);

  for (int k = 0; k < K; ++k) {
    const TrainSplit split = make_split(X, y, folds, k);
    GramCache gram(split.Xc);
    const Eigen::VectorXd xty =
        split.Xc.transpose() * split.yc / static_cast<double>(split.Xc.rows());

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(X.cols());
    std::vector<int> prev_support;           // support at lambda_{j-1}; empty sentinel
    Eigen::VectorXd prev_refit = beta;       // refit at lambda_{j-1}; zero sentinel
    bool prev_was_fallback = false;

    for (int j = 0; j < J; ++j) {
      cd_solve_split(split, grid.values[static_cast<std::size_t>(j)], beta, opts,
                     static_cast<std::size_t>(j));
      std::vector<int> support;
      for (Eigen::Index c = 0; c < beta.size(); ++c) {
        if (beta[c] != 0.0) support.push_back(static_cast<int>(c));
      }
      if (want_lasso) {
        raw.per_fold_lasso(j, k) = heldout_mse(split, X, y, beta, support);
      }
      if (want_refit) {
        if (support == prev_support && !prev_was_fallback) {
          // Same covariates selected as at the previous grid value: reuse.
        } else {
          Eigen::VectorXd refit;
          if (gram_refit(split, gram, xty, support, refit)) {
            prev_refit = std::move(refit);
            prev_was_fallback = false;
          } else {
            prev_refit = beta;
            prev_was_fallback = true;
            ++raw.fallbacks;
          }
        }
        prev_support = support;
        raw.per_fold_refit(j, k) = heldout_mse(split, X, y, prev_refit, support);
      } else {
        prev_support = std::move(support);
      }
    }
  }
  return raw;
}

}  // namespace

FoldAssignment kfold_partition(int n_g, int K, std::uint64_t seed) {
  if (K < 2) throw InputError("kfold_partition: K must be at least 2");
  if (K > n_g) {
    throw InputError("kfold_partition: K = " + std::to_string(K) +
                     " exceeds group size " + std::to_string(n_g));
  }
  std::vector<int> perm(static_cast<std::size_t>(n_g));
  for (int i = 0; i < n_g; ++i) perm[static_cast<std::size_t>(i)] = i;
  CounterRng rng(seed, kFoldStream);
  for (int i = n_g - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i + 1)));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  FoldAssignment f;
  f.K = K;
  f.seed = seed;
  f.fold_of.resize(static_cast<std::size_t>(n_g));
  for (int i = 0; i < n_g; ++i) {
    f.fold_of[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i % K;
  }
  return f;
}

CvResult cv_lasso(const Eigen::MatrixXd& X_g, const Eigen::VectorXd& y_g,
                  const LambdaGrid& grid, int K, std::uint64_t seed) {
  CvRaw raw = cv_engine(X_g, y_g, grid, K, seed, /*want_lasso=*/true,
                        /*want_refit=*/false);
  return finalize(grid, std::move(raw.per_fold_lasso), 0);
}

CvResult cv_lasso_ols(const Eigen::MatrixXd& X_g, const Eigen::VectorXd& y_g,
                      const LambdaGrid& grid, int K, std::uint64_t seed) {
  CvRaw raw = cv_engine(X_g, y_g, grid, K, seed, /*want_lasso=*/false,
                        /*want_refit=*/true);
  return finalize(grid, std::move(raw.per_fold_refit), raw.fallbacks);
}

CvPair cv_lasso_pair(const Eigen::MatrixXd& X_g, const Eigen::VectorXd& y_g,
                     const LambdaGrid& grid, int K, std::uint64_t seed) {
  CvRaw raw = cv_engine(X_g, y_g, grid, K, seed, /*want_lasso=*/true,
                        /*want_refit=*/true);
  CvPair pair;
  pair.lasso = finalize(grid, std::move(raw.per_fold_lasso), 0);
  pair.lasso_ols = finalize(grid, std::move(raw.per_fold_refit), raw.fallbacks);
  return pair;
}

}  // namespace atelasso
