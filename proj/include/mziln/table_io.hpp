#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mziln/composition.hpp"
#include "mziln/design.hpp"
#include "mziln/simulate.hpp"

namespace mziln {

/// Rectangular tab-delimited table: header row of column names with a leading
/// id-column label, then one row per id. `#` lines are comments.
struct Table {
  std::vector<std::string> column_names;
  std::vector<std::string> row_ids;
  Eigen::MatrixXd values;  // NaN marks a missing cell ("", "NA", "NaN")
};

/// Reads a delimited table; `transpose` flips a file laid out the other way
/// (ids across the header). Throws ParseError with 1-based row/column
/// locations on malformed cells, duplicate ids, or ragged rows.
Table read_table(const std::string& path, bool transpose = false);

enum class TaxaMode { counts, relative };

struct IngestOptions {
  std::string reference_taxon;  // column name; empty keeps the last column
  TaxaMode mode = TaxaMode::counts;
  bool transpose_taxa = false;
  bool transpose_covariates = false;
};

struct IngestResult {
  std::vector<CompositionSample> samples;
  std::vector<CovariateRecord> covariates;
  std::vector<std::string> taxa_names;  // reordered: reference last
  std::vector<std::string> covariate_names;
  std::vector<std::string> subject_ids;  // retained, in taxa-file order
  std::vector<std::string> dropped_taxa;  // all-zero columns
  int n_subjects_dropped_join = 0;     // missing from one of the two files
  int n_subjects_dropped_missing = 0;  // missing covariate values
  int n_subjects_dropped_zero = 0;     // all-zero taxa rows
};

/// Taxa-only half of ingest: read, drop all-zero columns, move the reference
/// to the last position, normalize rows to relative abundances.
IngestResult ingest_taxa(const std::string& taxa_path, const IngestOptions& options);

/// Full ingest: taxa plus covariates, inner-joined on subject id; subjects
/// with missing covariate values are dropped and counted. Throws IngestError
/// when no subject survives.
IngestResult ingest(const std::string& taxa_path, const std::string& covariates_path,
                    const IngestOptions& options);

/// One simulation manifest: flat `key = value` lines, `#` comments, an
/// optional one-field sweep.
struct Manifest {
  std::string name;
  bool lowdim = false;
  ScenarioConfig base;
  std::string sweep_field;           // empty means a single run
  std::vector<double> sweep_values;
};

Manifest read_manifest(const std::string& path);

/// The manifest serialized back to `key = value` lines (the resolved-config
/// header of every output file).
std::string manifest_to_string(const Manifest& manifest);

/// Returns `base` with the named sweep field replaced; throws ConfigError for
/// fields that cannot be swept.
ScenarioConfig apply_sweep(const ScenarioConfig& base, const std::string& field,
                           double value);

/// Write-to-temp-then-rename so readers never observe a half-written file.
void write_text_atomic(const std::string& path, const std::string& content);

std::string format_full(double value);   // 17 significant digits
std::string format_human(double value);  // 4 significant digits

}  // namespace mziln
