#include <doctest.h>

#include <cmath>

#include "atelasso/design_matrix.hpp"
#include "atelasso/errors.hpp"
#include "atelasso/rng.hpp"

using namespace atelasso;

namespace {

Eigen::MatrixXd random_matrix(int n, int m, std::uint64_t seed) {
  CounterRng rng(seed, 0);
  Eigen::MatrixXd X(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) X(i, j) = rng.next_normal();
  }
  return X;
}

std::vector<std::string> default_names(int m) {
  std::vector<std::string> names;
  for (int j = 0; j < m; ++j) names.push_back("x" + std::to_string(j));
  return names;
}

int index_of(const DesignMatrix& dm, const std::string& name) {
  for (int j = 0; j < dm.n_columns(); ++j) {
    if (dm.column_names[static_cast<std::size_t>(j)] == name) return j;
  }
  return -1;
}

}  // namespace

TEST_CASE("log transform discards sign and maps the textbook points") {
  Eigen::VectorXd zero(1), e_minus_1(1), neg(1);
  zero << 0.0;
  e_minus_1 << std::exp(1.0) - 1.0;
  neg << -(std::exp(1.0) - 1.0);
  CHECK(log_transform_column(zero)[0] == doctest::Approx(0.0));
  CHECK(log_transform_column(e_minus_1)[0] == doctest::Approx(1.0).epsilon(1e-12));
  // |x| is applied before the log, so the negative input maps to the same value.
  CHECK(log_transform_column(neg)[0] == doctest::Approx(1.0).epsilon(1e-12));

  Eigen::VectorXd bad(3);
  bad << 1.0, std::nan(""), 2.0;
  CHECK_THROWS_WITH_AS(log_transform_column(bad),
                       doctest::Contains("index 1"), InputError);
}

TEST_CASE("two non-indicator mains expand to five columns") {
  const Eigen::MatrixXd raw = random_matrix(30, 2, 1);
  const auto dm = build_design_matrix(raw, {"a", "b"}, {false, false});
  REQUIRE(dm.n_columns() == 5);
  CHECK(dm.column_names[0] == "a");
  CHECK(dm.column_names[1] == "b");
  CHECK(dm.column_names[2] == "a.a");
  CHECK(dm.column_names[3] == "b.b");
  CHECK(dm.column_names[4] == "a:b");
  CHECK(dm.column_kinds[2] == ColumnKind::quadratic);
  CHECK(dm.column_kinds[4] == ColumnKind::interaction);
}

TEST_CASE("duplicated raw column is removed, keeping the first") {
  Eigen::MatrixXd raw(20, 2);
  raw.col(0) = random_matrix(20, 1, 2);
  raw.col(1) = raw.col(0);
  FeaturizeOptions opts;
  opts.include_quadratics = false;
  opts.include_interactions = false;
  const auto dm = build_design_matrix(raw, {"a", "a_copy"}, {false, false}, opts);
  REQUIRE(dm.n_columns() == 1);
  CHECK(dm.column_names[0] == "a");
  REQUIRE(dm.dropped.size() == 1);
  CHECK(dm.dropped[0].name == "a_copy");
  CHECK(dm.dropped[0].reason == "duplicate of a");
}

TEST_CASE("sparse indicator columns are filtered") {
  Eigen::MatrixXd raw = random_matrix(100, 2, 3);
  raw.col(1).setZero();
  for (int i = 0; i < 5; ++i) raw(i, 1) = 1.0;  // 5 ones < min_ones = 20
  const auto dm = build_design_matrix(raw, {"a", "ind"}, {false, true});
  CHECK(index_of(dm, "ind") == -1);
  bool recorded = false;
  for (const auto& d : dm.dropped) {
    if (d.name == "ind") recorded = true;
  }
  CHECK(recorded);
}

TEST_CASE("interaction of two indicators is subject to the sparsity filter") {
  // Two indicators, each dense enough, whose product has only a few ones.
  Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(100, 2);
  for (int i = 0; i < 30; ++i) raw(i, 0) = 1.0;
  for (int i = 25; i < 60; ++i) raw(i, 1) = 1.0;  // overlap = 5 rows
  const auto dm = build_design_matrix(raw, {"u", "v"}, {true, true});
  CHECK(index_of(dm, "u") >= 0);
  CHECK(index_of(dm, "v") >= 0);
  CHECK(index_of(dm, "u:v") == -1);
}

TEST_CASE("derived columns too correlated with a main are dropped") {
  CounterRng rng(4, 0);
  Eigen::MatrixXd raw(200, 2);
  for (int i = 0; i < 200; ++i) {
    raw(i, 0) = rng.next_normal();
    // Nearly an affine function of x0, so x0:x1 correlates strongly with x0.
    raw(i, 1) = 3.0 + 0.001 * rng.next_normal();
  }
  const auto dm = build_design_matrix(raw, {"a", "c"}, {false, false});
  CHECK(index_of(dm, "a:c") == -1);
  bool reason_seen = false;
  for (const auto& d : dm.dropped) {
    if (d.name == "a:c" && d.reason.find("correlation") != std::string::npos) {
      reason_seen = true;
    }
  }
  CHECK(reason_seen);
}

TEST_CASE("standardized columns are centered with unit sample SD") {
  const Eigen::MatrixXd raw = random_matrix(50, 3, 5);
  const auto dm = build_design_matrix(raw, default_names(3),
                                      {false, false, false});
  const int n = dm.n();
  for (int j = 0; j < dm.n_columns(); ++j) {
    const auto col = dm.columns.col(j);
    CHECK(std::abs(col.mean()) <= 1e-10);
    const double sd = std::sqrt((col.array() - col.mean()).square().sum() / (n - 1));
    CHECK(std::abs(sd - 1.0) <= 1e-10);
  }
}

TEST_CASE("indicator-derived columns stay 0/1 and unscaled") {
  Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(100, 2);
  for (int i = 0; i < 50; ++i) raw(i, 0) = 1.0;
  for (int i = 25; i < 80; ++i) raw(i, 1) = 1.0;
  const auto dm = build_design_matrix(raw, {"u", "v"}, {true, true});
  const int j = index_of(dm, "u");
  REQUIRE(j >= 0);
  CHECK(dm.standardization_record[static_cast<std::size_t>(j)].center == 0.0);
  CHECK(dm.standardization_record[static_cast<std::size_t>(j)].scale == 1.0);
  CHECK(dm.columns.col(j).maxCoeff() == 1.0);
  CHECK(dm.columns.col(j).minCoeff() == 0.0);
}

TEST_CASE("constant columns are dropped with a warning, not an error") {
  Eigen::MatrixXd raw = random_matrix(30, 2, 6);
  raw.col(1).setConstant(7.0);
  FeaturizeOptions opts;
  opts.include_quadratics = false;
  opts.include_interactions = false;
  const auto dm = build_design_matrix(raw, {"a", "const"}, {false, false}, opts);
  CHECK(index_of(dm, "const") == -1);
  bool reason_seen = false;
  for (const auto& d : dm.dropped) {
    if (d.name == "const" && d.reason.find("constant") != std::string::npos) {
      reason_seen = true;
    }
  }
  CHECK(reason_seen);
}

TEST_CASE("featurization is deterministic") {
  const Eigen::MatrixXd raw = random_matrix(40, 4, 7);
  std::vector<bool> ind = {false, false, false, false};
  const auto a = build_design_matrix(raw, default_names(4), ind);
  const auto b = build_design_matrix(raw, default_names(4), ind);
  REQUIRE(a.n_columns() == b.n_columns());
  CHECK(a.columns == b.columns);
  CHECK(a.column_names == b.column_names);
}

TEST_CASE("standardization record inverts back to the raw-derived columns") {
  const Eigen::MatrixXd raw = random_matrix(60, 3, 8);
  const auto dm = build_design_matrix(raw, default_names(3),
                                      {false, false, false});
  // Rebuild without standardization to get the raw-derived columns.
  FeaturizeOptions no_std;
  no_std.standardize = false;
  const auto rawdm = build_design_matrix(raw, default_names(3),
                                         {false, false, false}, no_std);
  REQUIRE(dm.n_columns() == rawdm.n_columns());
  for (int j = 0; j < dm.n_columns(); ++j) {
    const auto& t = dm.standardization_record[static_cast<std::size_t>(j)];
    const Eigen::VectorXd recovered =
        (dm.columns.col(j).array() * t.scale + t.center).matrix();
    CHECK((recovered - rawdm.columns.col(j)).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("column count with filters disabled is m + q + C(m,2)") {
  for (int m : {2, 3, 5}) {
    const Eigen::MatrixXd raw = random_matrix(50, m, 100 + m);
    FeaturizeOptions opts;
    opts.corr_threshold = 1.1;  // nothing can exceed it
    opts.min_ones = 0;
    opts.standardize = false;
    const auto dm = build_design_matrix(raw, default_names(m),
                                        std::vector<bool>(m, false), opts);
    CHECK(dm.n_columns() == m + m + m * (m - 1) / 2);
  }
}

TEST_CASE("indicator flag on a non-binary column is rejected") {
  const Eigen::MatrixXd raw = random_matrix(20, 1, 9);
  CHECK_THROWS_AS(build_design_matrix(raw, {"a"}, {true}), InputError);
}
