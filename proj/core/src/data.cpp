#include "atelasso/data.hpp"

#include <cmath>
#include <string>

#include "atelasso/errors.hpp"

namespace atelasso {

Population Population::create(Eigen::MatrixXd covariates,
                              Eigen::VectorXd outcomes_treated,
                              Eigen::VectorXd outcomes_control) {
  const auto n = outcomes_treated.size();
  if (n < 2) throw InputError("Population: need n >= 2 units");
  if (outcomes_control.size() != n) {
    throw InputError("Population: outcome vectors differ in length");
  }
  if (covariates.rows() != n) {
    throw InputError("Population: covariate rows (" +
                     std::to_string(covariates.rows()) +
                     ") do not match n = " + std::to_string(n));
  }
  Population pop;
  pop.covariates = std::move(covariates);
  pop.outcomes_treated = std::move(outcomes_treated);
  pop.outcomes_control = std::move(outcomes_control);
  pop.true_ate = pop.outcomes_treated.mean() - pop.outcomes_control.mean();
  return pop;
}

std::vector<int> ExperimentSample::treated_indices() const {
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(n_treated()));
  for (int i = 0; i < n(); ++i) {
    if (assignment[i] == 1) idx.push_back(i);
  }
  return idx;
}

std::vector<int> ExperimentSample::control_indices() const {
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(n_control()));
  for (int i = 0; i < n(); ++i) {
    if (assignment[i] == 0) idx.push_back(i);
  }
  return idx;
}

Eigen::MatrixXd ExperimentSample::covariate_rows(const std::vector<int>& idx) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), covariates.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = covariates.row(idx[r]);
  }
  return out;
}

Eigen::VectorXd ExperimentSample::observed_at(const std::vector<int>& idx) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out[static_cast<Eigen::Index>(r)] = observed[idx[r]];
  }
  return out;
}

ExperimentSample ExperimentSample::create(Eigen::MatrixXd covariates,
                                          Eigen::VectorXi assignment,
                                          Eigen::VectorXd observed) {
  const auto n = observed.size();
  if (assignment.size() != n || covariates.rows() != n) {
    throw InputError("ExperimentSample: covariates, assignment and observed "
                     "must share the same number of rows");
  }
  int n_a = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (assignment[i] != 0 && assignment[i] != 1) {
      throw InputError("ExperimentSample: assignment must be 0/1 (row " +
                       std::to_string(i) + ")");
    }
    n_a += assignment[i];
  }
  if (n_a < 1 || n_a > n - 1) {
    throw InputError("ExperimentSample: both groups must be nonempty");
  }
  if (!covariates.allFinite()) {
    throw InputError("ExperimentSample: covariates contain non-finite entries");
  }
  if (!observed.allFinite()) {
    throw InputError("ExperimentSample: observed outcomes contain non-finite entries");
  }
  ExperimentSample s;
  s.covariates = std::move(covariates);
  s.assignment = std::move(assignment);
  s.observed = std::move(observed);
  return s;
}

ExperimentSample reveal(const Population& pop, const Eigen::VectorXi& assignment) {
  if (assignment.size() != pop.n()) {
    throw InputError("reveal: assignment length does not match population size");
  }
  Eigen::VectorXd y(pop.n());
  for (int i = 0; i < pop.n(); ++i) {
    y[i] = assignment[i] == 1 ? pop.outcomes_treated[i] : pop.outcomes_control[i];
  }
  return ExperimentSample::create(pop.covariates, assignment, std::move(y));
}

}  // namespace atelasso
