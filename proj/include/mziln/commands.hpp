#pragma once

#include <cstdint>
#include <string>

#include "mziln/table_io.hpp"

namespace mziln {

/// Exit codes shared by every subcommand: 0 success, 1 configuration or
/// parse problem (bad flag, malformed file, invalid manifest field), 2 data
/// degeneracy (no usable subjects, singular covariance, empty system).
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitDegenerate = 2;

struct FitArgs {
  std::string taxa_path;
  std::string covariates_path;
  std::string out_dir = ".";
  std::string reference_taxon;  // name; empty keeps the last column
  std::string penalty = "mcp";
  int folds = 10;
  int lambda_grid_size = 100;
  std::uint64_t seed = 1;
  int threads = 1;
  bool one_se_rule = false;
  TaxaMode mode = TaxaMode::counts;
  bool transpose_taxa = false;
  bool transpose_covariates = false;
};

/// Penalized conditional-regression fit on real tables: ingest, per-subject
/// whitening, coordinate-descent path, subject-level cross-validation, then
/// coefficient / selection / composition-shift tables plus a JSON summary
/// under out_dir.
int cmd_fit(const FitArgs& args);

struct SimulateArgs {
  std::string manifest_path;
  std::string out_dir = ".";
  int threads = 0;          // 0 keeps the manifest value
  std::uint64_t seed = 0;   // 0 keeps the manifest value
};

/// Runs the manifest's scenario (or sweep) and writes aggregate and
/// per-replicate metric tables. Same manifest and seed give byte-identical
/// files.
int cmd_simulate(const SimulateArgs& args);

struct TransformArgs {
  std::string taxa_path;
  std::string out_dir = ".";
  std::string reference_taxon;
  TaxaMode mode = TaxaMode::counts;
  bool transpose_taxa = false;
};

/// Writes each subject's log-ratio vector with its nonzero taxa and the
/// reference resolution; subjects with fewer than two positive taxa are
/// flagged DEGENERATE instead of transformed.
int cmd_transform(const TransformArgs& args);

struct SpearmanArgs {
  std::string taxa_path;
  std::string covariates_path;
  std::string out_dir = ".";
  double fdr = 0.05;
  TaxaMode mode = TaxaMode::counts;
  bool transpose_taxa = false;
  bool transpose_covariates = false;
};

/// Marginal Spearman screen of every (taxon, covariate) pair with
/// Benjamini-Hochberg control, written as one table with a selected flag.
int cmd_spearman(const SpearmanArgs& args);

}  // namespace mziln
