#pragma once

#include <Eigen/Dense>

namespace atelasso {

/// Standard normal quantile (inverse CDF), accurate to ~1e-15 over (0,1).
/// Rational approximation in three regimes (Wichura's PPND16 scheme).
double normal_quantile(double p);

/// Two-sided critical value: normal_quantile((1 + level) / 2).
double two_sided_z(double level);

double mean(const Eigen::VectorXd& v);

/// Population variance: (1/n) * sum (v_i - mean)^2.
double population_variance(const Eigen::VectorXd& v);

/// Sample variance with the (n-1) denominator; n >= 2 required.
double sample_variance(const Eigen::VectorXd& v);

}  // namespace atelasso
