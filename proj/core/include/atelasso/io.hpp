#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "atelasso/data.hpp"
#include "atelasso/design_matrix.hpp"
#include "atelasso/diagnostics.hpp"
#include "atelasso/estimators.hpp"
#include "atelasso/simulation.hpp"

namespace atelasso {

using json = nlohmann::json;

/// All-numeric table with a header row.
struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd values;

  int column_index(const std::string& name) const;  // throws InputError
};

/// RFC 4180 CSV with a required header row; every data field must parse as a
/// number. Errors name the offending row and column.
CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text, const std::string& origin);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Eigen::MatrixXd& values);
std::string csv_to_string(const std::vector<std::string>& header,
                          const Eigen::MatrixXd& values);

/// Sidecar metadata: outcome/treatment column names for estimation inputs,
/// per-column indicator flags for featurization inputs.
struct DatasetMeta {
  std::string outcome;
  std::string treatment;
  std::map<std::string, bool> indicator;

  bool is_indicator(const std::string& column) const;
};
DatasetMeta read_meta(const std::string& path);
DatasetMeta parse_meta(const json& j);

/// Builds an ExperimentSample from a table, pulling the outcome and treatment
/// columns named by the metadata; the remaining columns become covariates in
/// table order (returned through covariate_names when non-null).
ExperimentSample sample_from_table(const CsvTable& table, const DatasetMeta& meta,
                                   std::vector<std::string>* covariate_names = nullptr);

/// Provenance block embedded in every CLI output.
struct RunManifest {
  std::string command;
  std::string config_digest;  // hex FNV-1a of the canonicalized inputs
  std::uint64_t seed = 0;
  std::string tool_version;
  std::string created_at;     // ISO 8601 UTC; the only non-reproducible field
};
RunManifest make_manifest(const std::string& command, const std::string& digest,
                          std::uint64_t seed);
std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t value);

json to_json(const RunManifest& m);
json to_json(const AteReport& report,
             const std::vector<std::string>& covariate_names = {});
json to_json(const CvResult& cv);
json to_json(const MethodSummary& summary);
json to_json(const MonteCarloSummary& summary, const SimulationConfig& config);
json to_json(const DiagnosticsReport& report,
             const std::vector<std::string>& covariate_names = {});
json to_json(const SimulationConfig& config);
json design_matrix_meta_json(const DesignMatrix& dm);

SimulationConfig simulation_config_from_json(const json& j);
SimulationConfig read_simulation_config(const std::string& path);

/// Per-replication CSV rows (one per replication x method) for external
/// plotting.
void write_replication_csv(const std::string& path,
                           const MonteCarloSummary& summary);

}  // namespace atelasso
