#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace atelasso {

enum class ColumnKind { main, indicator, quadratic, interaction };

const char* column_kind_name(ColumnKind kind);

/// Centering/scaling applied to one column; (0, 1) means untouched.
/// Raw value = standardized * scale + center.
struct ColumnTransform {
  double center = 0.0;
  double scale = 1.0;
};

struct DroppedColumn {
  std::string name;
  std::string reason;
};

struct DesignMatrix {
  Eigen::MatrixXd columns;
  std::vector<std::string> column_names;
  std::vector<ColumnKind> column_kinds;
  std::vector<ColumnTransform> standardization_record;
  std::vector<DroppedColumn> dropped;  // warning records, not errors

  int n() const { return static_cast<int>(columns.rows()); }
  int n_columns() const { return static_cast<int>(columns.cols()); }
};

struct FeaturizeOptions {
  bool include_quadratics = true;
  bool include_interactions = true;
  double corr_threshold = 0.95;
  int min_ones = 20;
  bool standardize = true;
};

/// x -> log(|x| + 1), elementwise. Sign information is discarded.
/// Throws InputError naming the first non-finite entry.
Eigen::VectorXd log_transform_column(const Eigen::VectorXd& values);

/// Expands raw covariates into a design matrix: main effects, quadratics of
/// non-indicator mains, all pairwise interactions; then
///   1. drops exact duplicate columns (keeping the first),
///   2. drops derived columns too correlated with any main effect,
///   3. drops 0/1 columns with fewer than `min_ones` ones,
///   4. centers and standardizes columns not derived purely from indicators.
/// Constant columns are dropped with a warning record when standardization
/// is requested. The result is deterministic in the input and options.
DesignMatrix build_design_matrix(const Eigen::MatrixXd& raw,
                                 const std::vector<std::string>& names,
                                 const std::vector<bool>& is_indicator,
                                 const FeaturizeOptions& opts = {});

}  // namespace atelasso
