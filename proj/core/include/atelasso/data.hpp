#pragma once

#include <Eigen/Dense>
#include <vector>

namespace atelasso {

/// Simulation ground truth: every unit carries both potential outcomes.
/// Immutable after construction; the only randomness downstream is the
/// treatment assignment.
struct Population {
  Eigen::MatrixXd covariates;        // n x p
  Eigen::VectorXd outcomes_treated;  // outcome if treated, length n
  Eigen::VectorXd outcomes_control;  // outcome if untreated, length n
  double true_ate = 0.0;             // mean(treated) - mean(control), cached

  int n() const { return static_cast<int>(outcomes_treated.size()); }
  int p() const { return static_cast<int>(covariates.cols()); }

  /// Validates shapes and caches the true ATE.
  static Population create(Eigen::MatrixXd covariates,
                           Eigen::VectorXd outcomes_treated,
                           Eigen::VectorXd outcomes_control);
};

/// Observed data from one randomized experiment: for each unit, the
/// covariates, the 0/1 assignment and the revealed outcome.
struct ExperimentSample {
  Eigen::MatrixXd covariates;  // n x p
  Eigen::VectorXi assignment;  // 0/1, length n
  Eigen::VectorXd observed;    // length n

  int n() const { return static_cast<int>(observed.size()); }
  int p() const { return static_cast<int>(covariates.cols()); }
  int n_treated() const { return assignment.sum(); }
  int n_control() const { return n() - n_treated(); }

  std::vector<int> treated_indices() const;
  std::vector<int> control_indices() const;

  /// Rows of `covariates` for the given unit indices.
  Eigen::MatrixXd covariate_rows(const std::vector<int>& idx) const;
  /// Entries of `observed` for the given unit indices.
  Eigen::VectorXd observed_at(const std::vector<int>& idx) const;

  /// Validates the invariants: binary assignment, both groups nonempty,
  /// finite covariates/outcomes.
  static ExperimentSample create(Eigen::MatrixXd covariates,
                                 Eigen::VectorXi assignment,
                                 Eigen::VectorXd observed);
};

/// Observes one assignment of a population: Y_i is the treated outcome for
/// assigned units and the control outcome otherwise.
ExperimentSample reveal(const Population& pop, const Eigen::VectorXi& assignment);

}  // namespace atelasso
