#include "mziln/table_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "mziln/errors.hpp"
#include "mziln/penalty.hpp"

namespace mziln {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  if (!cells.empty() && !cells.back().empty() && cells.back().back() == '\r')
    cells.back().pop_back();
  return cells;
}

bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "NA" || cell == "na" || cell == "NaN" ||
         cell == "nan";
}

double parse_cell(const std::string& cell, const std::string& path, int row,
                  int col) {
  if (is_missing(cell)) return std::numeric_limits<double>::quiet_NaN();
  char* end = nullptr;
  double v = std::strtod(cell.c_str(), &end);
  if (end == cell.c_str() || *end != '\0')
    throw ParseError(path + ": row " + std::to_string(row) + ", column " +
                     std::to_string(col) + ": not a number: '" + cell + "'");
  return v;
}

void check_unique(const std::vector<std::string>& names, const std::string& path,
                  const std::string& what) {
  std::unordered_set<std::string> seen;
  for (const auto& name : names) {
    if (name.empty())
      throw ParseError(path + ": empty " + what);
    if (!seen.insert(name).second)
      throw ParseError(path + ": duplicate " + what + ": '" + name + "'");
  }
}

int find_column(const std::vector<std::string>& names, const std::string& target) {
  auto it = std::find(names.begin(), names.end(), target);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

}  // namespace

Table read_table(const std::string& path, bool transpose) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);

  Table table;
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  std::size_t n_cols = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    std::vector<std::string> cells = split_tabs(line);
    if (!have_header) {
      if (cells.size() < 2)
        throw ParseError(path + ": header needs an id column and at least one value column");
      table.column_names.assign(cells.begin() + 1, cells.end());
      for (auto& name : table.column_names) name = trim(name);
      n_cols = cells.size();
      have_header = true;
      continue;
    }
    if (cells.size() != n_cols)
      throw ParseError(path + ": row " + std::to_string(line_no) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(n_cols));
    table.row_ids.push_back(trim(cells[0]));
    std::vector<double> row(n_cols - 1);
    for (std::size_t c = 1; c < n_cols; ++c)
      row[c - 1] = parse_cell(trim(cells[c]), path, line_no, static_cast<int>(c + 1));
    rows.push_back(std::move(row));
  }
  if (!have_header) throw ParseError(path + ": no header row");
  if (rows.empty()) throw ParseError(path + ": no data rows");

  table.values.resize(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(n_cols - 1));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c + 1 < n_cols; ++c)
      table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          rows[r][c];

  if (transpose) {
    std::swap(table.column_names, table.row_ids);
    table.values = table.values.transpose().eval();
  }
  check_unique(table.column_names, path, "column name");
  check_unique(table.row_ids, path, "row id");
  return table;
}

IngestResult ingest_taxa(const std::string& taxa_path, const IngestOptions& options) {
  Table taxa = read_table(taxa_path, options.transpose_taxa);
  const Eigen::Index n = taxa.values.rows();
  const Eigen::Index k1 = taxa.values.cols();

  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < k1; ++j) {
      double v = taxa.values(i, j);
      if (std::isnan(v))
        throw IngestError(taxa_path + ": missing abundance for subject '" +
                          taxa.row_ids[static_cast<std::size_t>(i)] + "', taxon '" +
                          taxa.column_names[static_cast<std::size_t>(j)] + "'");
      if (v < 0.0 || !std::isfinite(v))
        throw IngestError(taxa_path + ": negative or non-finite abundance for subject '" +
                          taxa.row_ids[static_cast<std::size_t>(i)] + "', taxon '" +
                          taxa.column_names[static_cast<std::size_t>(j)] + "'");
    }

  IngestResult result;
  std::vector<int> kept_cols;
  for (Eigen::Index j = 0; j < k1; ++j) {
    if (taxa.values.col(j).sum() > 0.0)
      kept_cols.push_back(static_cast<int>(j));
    else
      result.dropped_taxa.push_back(taxa.column_names[static_cast<std::size_t>(j)]);
  }
  if (kept_cols.size() < 2)
    throw IngestError(taxa_path + ": fewer than two taxa with any nonzero abundance");

  std::vector<std::string> kept_names;
  kept_names.reserve(kept_cols.size());
  for (int j : kept_cols) kept_names.push_back(taxa.column_names[static_cast<std::size_t>(j)]);

  if (!options.reference_taxon.empty()) {
    int ref = find_column(kept_names, options.reference_taxon);
    if (ref < 0) {
      std::string note =
          find_column(result.dropped_taxa, options.reference_taxon) >= 0
              ? " (present in the file but zero for every subject)"
              : "";
      throw IngestError(taxa_path + ": reference taxon not found: '" +
                        options.reference_taxon + "'" + note);
    }
    std::rotate(kept_cols.begin() + ref, kept_cols.begin() + ref + 1, kept_cols.end());
    std::rotate(kept_names.begin() + ref, kept_names.begin() + ref + 1, kept_names.end());
  }
  result.taxa_names = kept_names;

  const int n_taxa = static_cast<int>(kept_cols.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd row(n_taxa);
    for (int j = 0; j < n_taxa; ++j) row[j] = taxa.values(i, kept_cols[static_cast<std::size_t>(j)]);
    double total = row.sum();
    if (total <= 0.0) {
      ++result.n_subjects_dropped_zero;
      continue;
    }
    result.samples.push_back(CompositionSample::from_values(row / total));
    result.subject_ids.push_back(taxa.row_ids[static_cast<std::size_t>(i)]);
  }
  if (result.samples.empty())
    throw IngestError(taxa_path + ": every subject row is all zero");
  return result;
}

IngestResult ingest(const std::string& taxa_path, const std::string& covariates_path,
                    const IngestOptions& options) {
  IngestResult result = ingest_taxa(taxa_path, options);
  Table cov = read_table(covariates_path, options.transpose_covariates);
  result.covariate_names = cov.column_names;

  std::unordered_map<std::string, Eigen::Index> cov_rows;
  for (std::size_t i = 0; i < cov.row_ids.size(); ++i)
    cov_rows.emplace(cov.row_ids[i], static_cast<Eigen::Index>(i));

  std::vector<CompositionSample> samples;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < result.samples.size(); ++i) {
    auto it = cov_rows.find(result.subject_ids[i]);
    if (it == cov_rows.end()) {
      ++result.n_subjects_dropped_join;
      continue;
    }
    Eigen::VectorXd x = cov.values.row(it->second).transpose();
    if (x.hasNaN()) {
      ++result.n_subjects_dropped_missing;
      continue;
    }
    samples.push_back(std::move(result.samples[i]));
    ids.push_back(result.subject_ids[i]);
    result.covariates.push_back({std::move(x), result.subject_ids[i]});
  }
  result.samples = std::move(samples);
  result.subject_ids = std::move(ids);
  if (result.samples.empty())
    throw IngestError("no subject appears in both " + taxa_path + " and " +
                      covariates_path + " with complete covariates");
  return result;
}

namespace {

double parse_number(const std::string& value, const std::string& key) {
  std::string v = trim(value);
  if (v == "inf" || v == "infinity" || v == "Inf")
    return std::numeric_limits<double>::infinity();
  char* end = nullptr;
  double out = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError("manifest field '" + key + "': not a number: '" + value + "'");
  return out;
}

int parse_int(const std::string& value, const std::string& key) {
  double v = parse_number(value, key);
  if (!std::isfinite(v) || v != std::floor(v))
    throw ConfigError("manifest field '" + key + "': not an integer: '" + value + "'");
  return static_cast<int>(v);
}

bool parse_bool(const std::string& value, const std::string& key) {
  std::string v = trim(value);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("manifest field '" + key + "': not a boolean: '" + value + "'");
}

std::vector<double> parse_number_list(const std::string& value, const std::string& key) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(parse_number(item, key));
  }
  if (out.empty())
    throw ConfigError("manifest field '" + key + "': empty list");
  return out;
}

CovarianceShape parse_shape(const std::string& value, const std::string& key) {
  std::string v = trim(value);
  if (v == "ar1") return CovarianceShape::ar1;
  if (v == "exchangeable") return CovarianceShape::exchangeable;
  throw ConfigError("manifest field '" + key + "': expected ar1 or exchangeable, got '" +
                    value + "'");
}

const char* shape_name(CovarianceShape shape) {
  return shape == CovarianceShape::ar1 ? "ar1" : "exchangeable";
}

/// Applies one key to the manifest; returns false for unknown keys.
bool apply_field(Manifest& m, const std::string& key, const std::string& value) {
  ScenarioConfig& c = m.base;
  if (key == "mode") {
    std::string v = trim(value);
    if (v == "lowdim") m.lowdim = true;
    else if (v == "highdim") m.lowdim = false;
    else throw ConfigError("manifest field 'mode': expected lowdim or highdim, got '" + value + "'");
  } else if (key == "name") {
    m.name = trim(value);
  } else if (key == "n_subjects") {
    c.n_subjects = parse_int(value, key);
  } else if (key == "n_taxa") {
    c.n_taxa = parse_int(value, key);
  } else if (key == "n_covariates") {
    c.n_covariates = parse_int(value, key);
  } else if (key == "covariate_rho") {
    c.covariate_rho = parse_number(value, key);
  } else if (key == "outcome_rho") {
    c.outcome_rho = parse_number(value, key);
  } else if (key == "outcome_shape") {
    c.outcome_shape = parse_shape(value, key);
  } else if (key == "outcome_sd") {
    c.outcome_sd = parse_number(value, key);
  } else if (key == "snr") {
    c.snr = parse_number(value, key);
  } else if (key == "presence_probability") {
    c.presence_probability = parse_number(value, key);
  } else if (key == "n_active_covariates") {
    c.n_active_covariates = parse_int(value, key);
  } else if (key == "taxa_per_active_covariate") {
    c.taxa_per_active_covariate = parse_int(value, key);
  } else if (key == "beta_low") {
    c.beta_low = parse_number(value, key);
  } else if (key == "beta_high") {
    c.beta_high = parse_number(value, key);
  } else if (key == "misspec_gamma") {
    c.misspec_gamma = parse_number(value, key);
  } else if (key == "reference_taxon") {
    c.reference_taxon = parse_int(value, key);
  } else if (key == "n_replicates") {
    c.n_replicates = parse_int(value, key);
  } else if (key == "seed") {
    double v = parse_number(value, key);
    if (v < 0 || v != std::floor(v))
      throw ConfigError("manifest field 'seed': not a nonnegative integer: '" + value + "'");
    c.seed = static_cast<std::uint64_t>(v);
  } else if (key == "intercept_value") {
    c.intercept_value = parse_number(value, key);
  } else if (key == "slope_value") {
    c.slope_value = parse_number(value, key);
  } else if (key == "penalty") {
    c.penalty_family = parse_penalty_family(trim(value));
  } else if (key == "cv_folds") {
    c.cv_folds = parse_int(value, key);
  } else if (key == "grid_size") {
    c.path.grid_size = parse_int(value, key);
  } else if (key == "lambda_min_ratio") {
    c.path.lambda_min_ratio = parse_number(value, key);
  } else if (key == "one_se_rule") {
    c.one_se_rule = parse_bool(value, key);
  } else if (key == "run_spearman") {
    c.run_spearman = parse_bool(value, key);
  } else if (key == "fdr_q") {
    c.fdr_q = parse_number(value, key);
  } else if (key == "n_threads") {
    c.n_threads = parse_int(value, key);
  } else if (key == "sweep_field") {
    m.sweep_field = trim(value);
  } else if (key == "sweep_values") {
    m.sweep_values = parse_number_list(value, key);
  } else {
    return false;
  }
  return true;
}

}  // namespace

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path);

  Manifest manifest;
  manifest.name = std::filesystem::path(path).stem().string();

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ": line " + std::to_string(line_no) +
                        ": expected 'key = value', got '" + stripped + "'");
    std::string key = trim(stripped.substr(0, eq));
    std::string value = trim(stripped.substr(eq + 1));
    if (!apply_field(manifest, key, value))
      throw ConfigError(path + ": line " + std::to_string(line_no) +
                        ": unknown manifest field '" + key + "'");
  }
  if (manifest.sweep_field.empty() != manifest.sweep_values.empty())
    throw ConfigError(path + ": sweep_field and sweep_values must be set together");
  if (!manifest.sweep_field.empty())
    apply_sweep(manifest.base, manifest.sweep_field, manifest.sweep_values.front());
  return manifest;
}

ScenarioConfig apply_sweep(const ScenarioConfig& base, const std::string& field,
                           double value) {
  ScenarioConfig out = base;
  if (field == "snr") out.snr = value;
  else if (field == "outcome_rho") out.outcome_rho = value;
  else if (field == "covariate_rho") out.covariate_rho = value;
  else if (field == "presence_probability") out.presence_probability = value;
  else if (field == "misspec_gamma") out.misspec_gamma = value;
  else if (field == "beta_low") out.beta_low = value;
  else if (field == "beta_high") out.beta_high = value;
  else if (field == "n_subjects") out.n_subjects = static_cast<int>(value);
  else if (field == "n_taxa") out.n_taxa = static_cast<int>(value);
  else if (field == "n_replicates") out.n_replicates = static_cast<int>(value);
  else if (field == "seed") out.seed = static_cast<std::uint64_t>(value);
  else throw ConfigError("cannot sweep over manifest field '" + field + "'");
  return out;
}

std::string manifest_to_string(const Manifest& m) {
  const ScenarioConfig& c = m.base;
  std::ostringstream out;
  out << "mode = " << (m.lowdim ? "lowdim" : "highdim") << '\n'
      << "name = " << m.name << '\n'
      << "n_subjects = " << c.n_subjects << '\n'
      << "n_taxa = " << c.n_taxa << '\n'
      << "n_covariates = " << c.n_covariates << '\n'
      << "covariate_rho = " << format_full(c.covariate_rho) << '\n'
      << "outcome_rho = " << format_full(c.outcome_rho) << '\n'
      << "outcome_shape = " << shape_name(c.outcome_shape) << '\n'
      << "outcome_sd = " << format_full(c.outcome_sd) << '\n'
      << "snr = " << format_full(c.snr) << '\n'
      << "presence_probability = " << format_full(c.presence_probability) << '\n'
      << "n_active_covariates = " << c.n_active_covariates << '\n'
      << "taxa_per_active_covariate = " << c.taxa_per_active_covariate << '\n'
      << "beta_low = " << format_full(c.beta_low) << '\n'
      << "beta_high = " << format_full(c.beta_high) << '\n'
      << "misspec_gamma = " << format_full(c.misspec_gamma) << '\n'
      << "reference_taxon = " << c.reference_taxon << '\n'
      << "n_replicates = " << c.n_replicates << '\n'
      << "seed = " << c.seed << '\n'
      << "intercept_value = " << format_full(c.intercept_value) << '\n'
      << "slope_value = " << format_full(c.slope_value) << '\n'
      << "penalty = " << penalty_family_name(c.penalty_family) << '\n'
      << "cv_folds = " << c.cv_folds << '\n'
      << "grid_size = " << c.path.grid_size << '\n'
      << "lambda_min_ratio = " << format_full(c.path.lambda_min_ratio) << '\n'
      << "one_se_rule = " << (c.one_se_rule ? "true" : "false") << '\n'
      << "run_spearman = " << (c.run_spearman ? "true" : "false") << '\n'
      << "fdr_q = " << format_full(c.fdr_q) << '\n'
      << "n_threads = " << c.n_threads << '\n';
  if (!m.sweep_field.empty()) {
    out << "sweep_field = " << m.sweep_field << '\n' << "sweep_values = ";
    for (std::size_t i = 0; i < m.sweep_values.size(); ++i) {
      if (i > 0) out << ',';
      out << format_full(m.sweep_values[i]);
    }
    out << '\n';
  }
  return out.str();
}

void write_text_atomic(const std::string& path, const std::string& content) {
  std::filesystem::path target(path);
  if (target.has_parent_path())
    std::filesystem::create_directories(target.parent_path());
  std::filesystem::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, target);
}

std::string format_full(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::string format_human(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", value);
  return buf;
}

}  // namespace mziln
