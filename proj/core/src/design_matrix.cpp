#include "atelasso/design_matrix.hpp"

#include <cmath>
#include <cstring>
#include <string>
#include <unordered_map>

#include "atelasso/errors.hpp"

namespace atelasso {

namespace {

struct Candidate {
  Eigen::VectorXd values;
  std::string name;
  ColumnKind kind;
  bool binary;  // 0/1 valued by construction; subject to the sparsity filter
};

bool is_binary_column(const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] != 0.0 && v[i] != 1.0) return false;
  }
  return true;
}

std::uint64_t column_hash(const Eigen::VectorXd& v) {
  // FNV-1a over the raw bytes; exact-duplicate detection only.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
  const std::size_t len = sizeof(double) * static_cast<std::size_t>(v.size());
  for (std::size_t i = 0; i < len; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool bit_identical(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(),
                     sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

double pearson_correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double ma = a.mean();
  const double mb = b.mean();
  const Eigen::ArrayXd ca = a.array() - ma;
  const Eigen::ArrayXd cb = b.array() - mb;
  const double denom = std::sqrt(ca.square().sum() * cb.square().sum());
  if (denom == 0.0) return 0.0;  // a constant column correlates with nothing
  return (ca * cb).sum() / denom;
}

}  // namespace

const char* column_kind_name(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::main: return "main";
    case ColumnKind::indicator: return "indicator";
    case ColumnKind::quadratic: return "quadratic";
    case ColumnKind::interaction: return "interaction";
  }
  return "unknown";
}

Eigen::VectorXd log_transform_column(const Eigen::VectorXd& values) {
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw InputError("log_transform_column: non-finite value at index " +
                       std::to_string(i));
    }
  }
  return (values.array().abs() + 1.0).log();
}

DesignMatrix build_design_matrix(const Eigen::MatrixXd& raw,
                                 const std::vector<std::string>& names,
                                 const std::vector<bool>& is_indicator,
                                 const FeaturizeOptions& opts) {
  const int n = static_cast<int>(raw.rows());
  const int m = static_cast<int>(raw.cols());
  if (n < 2) throw InputError("build_design_matrix: need at least 2 rows");
  if (static_cast<int>(names.size()) != m ||
      static_cast<int>(is_indicator.size()) != m) {
    throw InputError("build_design_matrix: names/indicator flags must match column count");
  }
  if (!raw.allFinite()) {
    throw InputError("build_design_matrix: raw matrix contains non-finite entries");
  }
  for (int j = 0; j < m; ++j) {
    if (is_indicator[j] && !is_binary_column(raw.col(j))) {
      throw InputError("build_design_matrix: column '" + names[j] +
                       "' flagged as indicator but is not 0/1");
    }
  }

  // Candidate order: mains, quadratics of non-indicator mains, all pairwise
  // interactions between mains.
  std::vector<Candidate> cands;
  for (int j = 0; j < m; ++j) {
    cands.push_back({raw.col(j), names[j],
                     is_indicator[j] ? ColumnKind::indicator : ColumnKind::main,
                     is_indicator[j]});
  }
  if (opts.include_quadratics) {
    for (int j = 0; j < m; ++j) {
      if (is_indicator[j]) continue;
      cands.push_back({raw.col(j).cwiseProduct(raw.col(j)),
                       names[j] + "." + names[j], ColumnKind::quadratic, false});
    }
  }
  if (opts.include_interactions) {
    for (int i = 0; i < m; ++i) {
      for (int j = i + 1; j < m; ++j) {
        cands.push_back({raw.col(i).cwiseProduct(raw.col(j)),
                         names[i] + ":" + names[j], ColumnKind::interaction,
                         is_indicator[i] && is_indicator[j]});
      }
    }
  }

  DesignMatrix out;

  // 1. Exact-duplicate removal, keeping the first occurrence.
  std::vector<Candidate> kept;
  std::unordered_multimap<std::uint64_t, std::size_t> seen;
  for (auto& c : cands) {
    const std::uint64_t h = column_hash(c.values);
    bool duplicate = false;
    auto range = seen.equal_range(h);
    for (auto it = range.first; it != range.second; ++it) {
      if (bit_identical(kept[it->second].values, c.values)) {
        out.dropped.push_back({c.name, "duplicate of " + kept[it->second].name});
        duplicate = true;
        break;
      }
    }
    if (!duplicate) {
      seen.emplace(h, kept.size());
      kept.push_back(std::move(c));
    }
  }

  // 2. Drop derived columns highly correlated with any main effect.
  {
    std::vector<std::size_t> mains;
    for (std::size_t j = 0; j < kept.size(); ++j) {
      if (kept[j].kind == ColumnKind::main || kept[j].kind == ColumnKind::indicator) {
        mains.push_back(j);
      }
    }
    std::vector<bool> drop(kept.size(), false);
    for (std::size_t j = 0; j < kept.size(); ++j) {
      const auto& c = kept[j];
      if (c.kind != ColumnKind::quadratic && c.kind != ColumnKind::interaction) {
        continue;
      }
      for (std::size_t mj : mains) {
        if (std::abs(pearson_correlation(c.values, kept[mj].values)) >
            opts.corr_threshold) {
          out.dropped.push_back({c.name, "correlation with " + kept[mj].name +
                                             " exceeds threshold"});
          drop[j] = true;
          break;
        }
      }
    }
    std::vector<Candidate> filtered;
    for (std::size_t j = 0; j < kept.size(); ++j) {
      if (!drop[j]) filtered.push_back(std::move(kept[j]));
    }
    kept = std::move(filtered);
  }

  // 3. Sparsity filter on 0/1 columns (indicator mains and indicator-by-
  //    indicator interactions alike).
  {
    std::vector<Candidate> filtered;
    for (auto& c : kept) {
      if (c.binary) {
        const int ones = static_cast<int>(c.values.sum());
        if (ones < opts.min_ones) {
          out.dropped.push_back({c.name, "indicator with " + std::to_string(ones) +
                                             " ones (min_ones = " +
                                             std::to_string(opts.min_ones) + ")"});
          continue;
        }
      }
      filtered.push_back(std::move(c));
    }
    kept = std::move(filtered);
  }

  // 4. Center and standardize everything not derived purely from indicators.
  std::vector<Eigen::VectorXd> final_cols;
  for (auto& c : kept) {
    ColumnTransform t;
    if (opts.standardize && !c.binary) {
      const double center = c.values.mean();
      const Eigen::ArrayXd centered = c.values.array() - center;
      const double sd = std::sqrt(centered.square().sum() / (n - 1));
      if (sd == 0.0) {
        out.dropped.push_back({c.name, "constant column (zero variance)"});
        continue;
      }
      c.values = (centered / sd).matrix();
      t.center = center;
      t.scale = sd;
    }
    out.column_names.push_back(c.name);
    out.column_kinds.push_back(c.kind);
    out.standardization_record.push_back(t);
    final_cols.push_back(std::move(c.values));
  }

  out.columns.resize(n, static_cast<Eigen::Index>(final_cols.size()));
  for (std::size_t j = 0; j < final_cols.size(); ++j) {
    out.columns.col(static_cast<Eigen::Index>(j)) = final_cols[j];
  }
  return out;
}

}  // namespace atelasso
