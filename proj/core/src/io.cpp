#include "atelasso/io.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include "atelasso/version.hpp"

namespace atelasso {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Splits one RFC 4180 record, honoring quoted fields and escaped quotes.
/// Returns false at end of input.
bool next_record(const std::string& text, std::size_t& pos,
                 std::vector<std::string>& fields, const std::string& origin,
                 std::size_t line_no) {
  fields.clear();
  if (pos >= text.size()) return false;
  std::string field;
  bool in_quotes = false;
  bool saw_any = false;
  while (pos < text.size()) {
    const char c = text[pos];
    saw_any = true;
    if (in_quotes) {
      if (c == '"') {
        if (pos + 1 < text.size() && text[pos + 1] == '"') {
          field += '"';
          pos += 2;
        } else {
          in_quotes = false;
          ++pos;
        }
      } else {
        field += c;
        ++pos;
      }
      continue;
    }
    if (c == '"') {
      if (!field.empty()) {
        throw InputError(origin + ": stray quote in line " + std::to_string(line_no));
      }
      in_quotes = true;
      ++pos;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      ++pos;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && pos + 1 < text.size() && text[pos + 1] == '\n') ++pos;
      ++pos;
      break;
    } else {
      field += c;
      ++pos;
    }
  }
  if (in_quotes) {
    throw InputError(origin + ": unterminated quoted field in line " +
                     std::to_string(line_no));
  }
  if (!saw_any) return false;
  fields.push_back(std::move(field));
  return true;
}

double parse_number(const std::string& field, const std::string& origin,
                    std::size_t line_no, std::size_t col) {
  if (field.empty()) {
    throw InputError(origin + ": empty field at line " + std::to_string(line_no) +
                     ", column " + std::to_string(col + 1));
  }
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (errno != 0 || end == field.c_str() || *end != '\0') {
    throw InputError(origin + ": '" + field + "' is not numeric at line " +
                     std::to_string(line_no) + ", column " +
                     std::to_string(col + 1));
  }
  return v;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

std::string format_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

json optional_int_json(const std::optional<int>& v) {
  return v ? json(*v) : json(nullptr);
}

json optional_double_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

json support_names_json(const std::optional<std::vector<int>>& support,
                        const std::vector<std::string>& names) {
  if (!support) return json(nullptr);
  json arr = json::array();
  for (int j : *support) {
    if (j >= 0 && j < static_cast<int>(names.size())) {
      arr.push_back(names[static_cast<std::size_t>(j)]);
    } else {
      arr.push_back("x" + std::to_string(j));
    }
  }
  return arr;
}

}  // namespace

int CsvTable::column_index(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    throw InputError("column '" + name + "' not found in CSV header");
  }
  return static_cast<int>(it - header.begin());
}

CsvTable parse_csv(const std::string& text, const std::string& origin) {
  std::size_t pos = 0;
  std::size_t line_no = 1;
  CsvTable table;
  std::vector<std::string> fields;
  if (!next_record(text, pos, fields, origin, line_no)) {
    throw InputError(origin + ": missing header row");
  }
  table.header = fields;
  const std::size_t ncol = table.header.size();

  std::vector<std::vector<double>> rows;
  while (true) {
    ++line_no;
    if (!next_record(text, pos, fields, origin, line_no)) break;
    if (fields.size() == 1 && fields[0].empty()) continue;  // trailing newline
    if (fields.size() != ncol) {
      throw InputError(origin + ": line " + std::to_string(line_no) + " has " +
                       std::to_string(fields.size()) + " fields, expected " +
                       std::to_string(ncol));
    }
    std::vector<double> row(ncol);
    for (std::size_t c = 0; c < ncol; ++c) {
      row[c] = parse_number(fields[c], origin, line_no, c);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError(origin + ": no data rows");

  table.values.resize(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(ncol));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < ncol; ++c) {
      table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          rows[r][c];
    }
  }
  return table;
}

CsvTable read_csv(const std::string& path) {
  return parse_csv(read_file(path), path);
}

std::string csv_to_string(const std::vector<std::string>& header,
                          const Eigen::MatrixXd& values) {
  if (static_cast<Eigen::Index>(header.size()) != values.cols()) {
    throw InputError("csv_to_string: header does not match column count");
  }
  std::string out;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c > 0) out += ',';
    out += csv_escape(header[c]);
  }
  out += '\n';
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      if (c > 0) out += ',';
      out += format_double(values(r, c));
    }
    out += '\n';
  }
  return out;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Eigen::MatrixXd& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write file: " + path);
  out << csv_to_string(header, values);
}

bool DatasetMeta::is_indicator(const std::string& column) const {
  const auto it = indicator.find(column);
  return it != indicator.end() && it->second;
}

DatasetMeta parse_meta(const json& j) {
  DatasetMeta meta;
  if (j.contains("outcome")) meta.outcome = j.at("outcome").get<std::string>();
  if (j.contains("treatment")) meta.treatment = j.at("treatment").get<std::string>();
  if (j.contains("columns")) {
    for (const auto& [name, spec] : j.at("columns").items()) {
      bool flag = false;
      if (spec.is_boolean()) {
        flag = spec.get<bool>();
      } else if (spec.is_object() && spec.contains("indicator")) {
        flag = spec.at("indicator").get<bool>();
      }
      meta.indicator[name] = flag;
    }
  }
  return meta;
}

DatasetMeta read_meta(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw InputError("cannot parse metadata JSON " + path + ": " + e.what());
  }
  return parse_meta(j);
}

ExperimentSample sample_from_table(const CsvTable& table, const DatasetMeta& meta,
                                   std::vector<std::string>* covariate_names) {
  if (meta.outcome.empty() || meta.treatment.empty()) {
    throw InputError("metadata must name the outcome and treatment columns");
  }
  const int y_col = table.column_index(meta.outcome);
  const int t_col = table.column_index(meta.treatment);
  const int n = static_cast<int>(table.values.rows());

  std::vector<int> cov_cols;
  for (int c = 0; c < static_cast<int>(table.header.size()); ++c) {
    if (c != y_col && c != t_col) cov_cols.push_back(c);
  }
  Eigen::MatrixXd X(n, static_cast<Eigen::Index>(cov_cols.size()));
  for (std::size_t c = 0; c < cov_cols.size(); ++c) {
    X.col(static_cast<Eigen::Index>(c)) = table.values.col(cov_cols[c]);
  }
  Eigen::VectorXi assignment(n);
  for (int i = 0; i < n; ++i) {
    const double t = table.values(i, t_col);
    if (t != 0.0 && t != 1.0) {
      throw InputError("treatment column '" + meta.treatment +
                       "' must be 0/1 (row " + std::to_string(i + 2) + ")");
    }
    assignment[i] = static_cast<int>(t);
  }
  if (covariate_names) {
    covariate_names->clear();
    for (int c : cov_cols) {
      covariate_names->push_back(table.header[static_cast<std::size_t>(c)]);
    }
  }
  return ExperimentSample::create(std::move(X), std::move(assignment),
                                  table.values.col(y_col));
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

RunManifest make_manifest(const std::string& command, const std::string& digest,
                          std::uint64_t seed) {
  RunManifest m;
  m.command = command;
  m.config_digest = digest;
  m.seed = seed;
  m.tool_version = kVersion;
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  m.created_at = buf;
  return m;
}

json to_json(const RunManifest& m) {
  return json{{"command", m.command},
              {"config_digest", m.config_digest},
              {"seed", m.seed},
              {"tool_version", m.tool_version},
              {"created_at", m.created_at}};
}

json to_json(const AteReport& report,
             const std::vector<std::string>& covariate_names) {
  json j{{"method", method_name(report.method)},
         {"estimate", report.estimate},
         {"sigma2_hat", report.sigma2_hat},
         {"std_error", report.std_error()},
         {"n", report.n},
         {"ci_level", report.ci_level},
         {"ci", json::array({report.ci_low, report.ci_high})},
         {"selected_treated", optional_int_json(report.selected_treated)},
         {"selected_control", optional_int_json(report.selected_control)},
         {"df_adjusted", report.df_adjusted},
         {"refit_fallback", report.refit_fallback},
         {"selection_capped", report.selection_capped},
         {"selected_covariates_treated",
          support_names_json(report.support_treated, covariate_names)},
         {"selected_covariates_control",
          support_names_json(report.support_control, covariate_names)}};
  if (report.cv_treated) j["cv_treated"] = to_json(*report.cv_treated);
  if (report.cv_control) j["cv_control"] = to_json(*report.cv_control);
  return j;
}

json to_json(const CvResult& cv) {
  json per_fold = json::array();
  for (Eigen::Index j = 0; j < cv.per_fold_error.rows(); ++j) {
    json row = json::array();
    for (Eigen::Index k = 0; k < cv.per_fold_error.cols(); ++k) {
      row.push_back(cv.per_fold_error(j, k));
    }
    per_fold.push_back(std::move(row));
  }
  return json{{"lambda_grid", cv.grid.values},
              {"cv_error", cv.cv_error},
              {"optimal_lambda", cv.optimal_lambda},
              {"optimal_index", cv.optimal_index},
              {"per_fold_error", std::move(per_fold)},
              {"refit_fallbacks", cv.refit_fallbacks}};
}

json to_json(const MethodSummary& s) {
  return json{{"bias", s.bias},
              {"sd", s.sd},
              {"rmse", s.rmse},
              {"coverage", s.coverage},
              {"mean_ci_length", s.mean_ci_length},
              {"mean_selected_treated", optional_double_json(s.mean_selected_treated)},
              {"mean_selected_control", optional_double_json(s.mean_selected_control)},
              {"se",
               json{{"bias", s.se_bias},
                    {"sd", s.se_sd},
                    {"rmse", s.se_rmse},
                    {"coverage", s.se_coverage},
                    {"mean_ci_length", s.se_mean_ci_length},
                    {"mean_selected_treated",
                     optional_double_json(s.se_mean_selected_treated)},
                    {"mean_selected_control",
                     optional_double_json(s.se_mean_selected_control)}}},
              {"failures", s.failures},
              {"replications_used", s.replications_used}};
}

json to_json(const MonteCarloSummary& summary, const SimulationConfig& config) {
  json methods = json::object();
  for (const auto& [m, s] : summary.methods) {
    methods[method_name(m)] = to_json(s);
  }
  return json{{"true_ate", summary.true_ate},
              {"config", to_json(config)},
              {"methods", std::move(methods)}};
}

json to_json(const DiagnosticsReport& report,
             const std::vector<std::string>& covariate_names) {
  auto name_of = [&](int j) {
    return (j >= 0 && j < static_cast<int>(covariate_names.size()))
               ? covariate_names[static_cast<std::size_t>(j)]
               : "x" + std::to_string(j);
  };
  json flagged = json::array();
  for (int j : report.flagged_fourth_moment) flagged.push_back(name_of(j));
  json support = json::array();
  for (int j : report.estimated_support) support.push_back(name_of(j));

  json gram = json(nullptr);
  if (report.gram_eigs_on_support) {
    gram = json{{"min", report.gram_eigs_on_support->first},
                {"max", report.gram_eigs_on_support->second}};
  }
  std::vector<double> moments(report.fourth_moments.data(),
                              report.fourth_moments.data() +
                                  report.fourth_moments.size());
  return json{{"fourth_moments", moments},
              {"max_fourth_moment", report.max_fourth_moment},
              {"flagged_fourth_moment", std::move(flagged)},
              {"estimated_support", std::move(support)},
              {"support_size", report.support_size},
              {"delta_n_hat", report.delta_n_hat},
              {"scaling_stat", report.scaling_stat},
              {"scaling_flagged", report.scaling_flagged},
              {"residual_second_moments",
               json{{"treated", report.resid_second_moment_treated},
                    {"control", report.resid_second_moment_control}}},
              {"gram_eigs_on_support", std::move(gram)},
              {"p_A", report.p_A},
              {"tau", report.tau},
              {"not_estimable", DiagnosticsReport::not_estimable()}};
}

json to_json(const SimulationConfig& config) {
  json methods = json::array();
  for (Method m : config.methods) methods.push_back(method_name(m));
  return json{{"n", config.n},
              {"p", config.p},
              {"s", config.s},
              {"rho", config.rho},
              {"n_A", config.n_A},
              {"replications", config.replications},
              {"seed", config.seed},
              {"linear_only", config.linear_only},
              {"hidden_covariates", config.hidden_covariates},
              {"error_family", error_family_name(config.error_family)},
              {"noise_scale", config.noise_scale},
              {"methods", std::move(methods)},
              {"ci_level", config.ci_level},
              {"n_lambda", config.tuning.n_lambda},
              {"lambda_min_ratio", config.tuning.lambda_min_ratio},
              {"K", config.tuning.K},
              {"df_adjust", config.tuning.df_adjust},
              {"bootstrap_resamples", config.bootstrap_resamples}};
}

json design_matrix_meta_json(const DesignMatrix& dm) {
  json columns = json::array();
  for (int j = 0; j < dm.n_columns(); ++j) {
    columns.push_back(
        json{{"name", dm.column_names[static_cast<std::size_t>(j)]},
             {"kind", column_kind_name(dm.column_kinds[static_cast<std::size_t>(j)])},
             {"center", dm.standardization_record[static_cast<std::size_t>(j)].center},
             {"scale", dm.standardization_record[static_cast<std::size_t>(j)].scale}});
  }
  json dropped = json::array();
  for (const auto& d : dm.dropped) {
    dropped.push_back(json{{"name", d.name}, {"reason", d.reason}});
  }
  return json{{"columns", std::move(columns)}, {"dropped", std::move(dropped)}};
}

SimulationConfig simulation_config_from_json(const json& j) {
  SimulationConfig c;
  try {
    if (j.contains("n")) c.n = j.at("n").get<int>();
    if (j.contains("p")) c.p = j.at("p").get<int>();
    if (j.contains("s")) c.s = j.at("s").get<int>();
    if (j.contains("rho")) c.rho = j.at("rho").get<double>();
    if (j.contains("n_A")) c.n_A = j.at("n_A").get<int>();
    if (j.contains("replications")) c.replications = j.at("replications").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("linear_only")) c.linear_only = j.at("linear_only").get<bool>();
    if (j.contains("hidden_covariates")) {
      c.hidden_covariates = j.at("hidden_covariates").get<bool>();
    }
    if (j.contains("error_family")) {
      c.error_family = error_family_from_name(j.at("error_family").get<std::string>());
    }
    if (j.contains("noise_scale")) c.noise_scale = j.at("noise_scale").get<double>();
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j.at("methods")) {
        c.methods.push_back(method_from_name(m.get<std::string>()));
      }
    }
    if (j.contains("ci_level")) c.ci_level = j.at("ci_level").get<double>();
    if (j.contains("n_lambda")) c.tuning.n_lambda = j.at("n_lambda").get<int>();
    if (j.contains("lambda_min_ratio")) {
      c.tuning.lambda_min_ratio = j.at("lambda_min_ratio").get<double>();
    }
    if (j.contains("K")) c.tuning.K = j.at("K").get<int>();
    if (j.contains("df_adjust")) c.tuning.df_adjust = j.at("df_adjust").get<bool>();
    if (j.contains("bootstrap_resamples")) {
      c.bootstrap_resamples = j.at("bootstrap_resamples").get<int>();
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("invalid simulation config: ") + e.what());
  }
  c.validate();
  return c;
}

SimulationConfig read_simulation_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw InputError("cannot parse config JSON " + path + ": " + e.what());
  }
  return simulation_config_from_json(j);
}

void write_replication_csv(const std::string& path,
                           const MonteCarloSummary& summary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write file: " + path);
  out << "replication,method,failed,estimate,sigma2_hat,ci_low,ci_high,covered,"
         "selected_treated,selected_control\n";
  for (const auto& r : summary.records) {
    out << r.replication << ',' << method_name(r.method) << ','
        << (r.failed ? 1 : 0) << ',';
    if (r.failed) {
      out << ",,,,,,";
    } else {
      out << format_double(r.estimate) << ',' << format_double(r.sigma2_hat)
          << ',' << format_double(r.ci_low) << ',' << format_double(r.ci_high)
          << ',' << (r.covered ? 1 : 0) << ',';
      out << (r.selected_treated ? std::to_string(*r.selected_treated) : "") << ',';
      out << (r.selected_control ? std::to_string(*r.selected_control) : "");
    }
    out << '\n';
  }
}

}  // namespace atelasso
