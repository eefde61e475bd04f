#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mziln/composition.hpp"
#include "mziln/design.hpp"
#include "mziln/path.hpp"
#include "mziln/rng.hpp"

namespace mziln {

enum class CovarianceShape { ar1, exchangeable };

/// One simulation scenario: data-generating settings plus the estimator to
/// run. The defaults shrink the published high-dimensional grid to a size
/// that runs in minutes.
struct ScenarioConfig {
  int n_subjects = 100;
  int n_taxa = 50;        // K+1
  int n_covariates = 10;  // Q
  double covariate_rho = 0.5;
  double outcome_rho = 0.5;
  CovarianceShape outcome_shape = CovarianceShape::ar1;
  double outcome_sd = 1.0;  // exchangeable shape and the low-dim scenario
  double snr = 4.5;         // infinity means sigma = 0 (no over-dispersion)
  double presence_probability = 0.54;
  int n_active_covariates = 3;
  int taxa_per_active_covariate = 5;
  double beta_low = 1.0;  // signal magnitudes drawn from +/-[low, high)
  double beta_high = 3.0;
  double misspec_gamma = 0.0;  // chi-square contamination weight in [0, 1]
  int reference_taxon = 0;     // 1-based column made the reference; 0 keeps K+1
  int n_replicates = 3;
  std::uint64_t seed = 1;

  // Low-dimensional (dense-truth) scenario values.
  double intercept_value = -0.1;
  double slope_value = 0.8;

  // Estimator settings.
  PenaltySpec::Family penalty_family = PenaltySpec::Family::mcp;
  int cv_folds = 10;
  PathOptions path;
  bool one_se_rule = false;
  bool run_spearman = false;
  double fdr_q = 0.05;
  int n_threads = 1;
};

struct SelectionCounts {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};

struct SelectionSummary {
  double recall_mean = 0.0, recall_sd = 0.0;
  double precision_mean = 0.0, precision_sd = 0.0;
  double f1_mean = 0.0, f1_sd = 0.0;
  long tp = 0, fp = 0, fn = 0;
};

/// One row of the low-dimensional report: a parameter group (intercepts, one
/// covariate's slopes, sd, rho) with its averaged bias / percent bias /
/// coverage.
struct GroupStat {
  std::string name;
  double ave_bias = 0.0;
  double ave_percent_bias = 0.0;  // percent; parameters with zero truth skipped
  double ave_cp = 0.0;            // percent
};

struct MetricReport {
  std::vector<GroupStat> groups;                     // low-dim rows
  std::vector<SelectionCounts> model_replicates;     // high-dim per-replicate
  std::vector<SelectionCounts> baseline_replicates;  // Spearman, when run
  SelectionSummary model;
  SelectionSummary baseline;
  int n_failed_replicates = 0;
  long n_presence_resamples = 0;
};

/// N x Q covariate draws, rows i.i.d. N(0, C) with C_ij = rho_x^|i-j|.
Eigen::MatrixXd gen_covariates(int n_subjects, int n_covariates, double rho_x, Rng& rng);

struct SparseBeta {
  CoefficientVector beta;
  std::vector<SupportEntry> truth;  // the planted (taxon, covariate, sign) set
};

/// Sparse truth: n_active covariates each tied to taxa_per_cov distinct taxa,
/// coefficients uniform on (-high, -low] U [low, high), intercepts zero.
SparseBeta gen_sparse_beta(int n_ratios, int n_covariates, int n_active,
                           int taxa_per_cov, double low, double high, Rng& rng);

/// K x K outcome covariance: sigma^2 rho^|i-j| (ar1) or
/// sigma^2 [(1-rho) I + rho 11'] (exchangeable).
Eigen::MatrixXd gen_outcome_covariance(int n_ratios, double sigma, double rho,
                                       CovarianceShape shape = CovarianceShape::ar1);

/// sigma = sd(linear predictor entries) / target_snr; infinity maps to 0.
double calibrate_sigma(double target_snr, const Eigen::MatrixXd& linear_predictors);

struct PresenceDraw {
  std::vector<std::vector<bool>> rows;
  long n_resampled = 0;  // all-absent rows hit before conditioning
};

/// Independent Bernoulli(p) presence per entry; all-absent rows are redrawn.
PresenceDraw gen_presence(int n_subjects, int n_taxa, double p, Rng& rng);

/// Zero out absent taxa of the latent composition exp-normalized from u and
/// renormalize the survivors.
CompositionSample compose_observed(const Eigen::VectorXd& u,
                                   const std::vector<bool>& presence);

/// Draw U ~ N(mu, L L') with the given Cholesky factor and compose with the
/// presence pattern.
CompositionSample gen_mziln_sample(const Eigen::VectorXd& mu,
                                   const Eigen::MatrixXd& sigma_chol,
                                   const std::vector<bool>& presence, Rng& rng);

/// U = mu + (1-gamma) eps + gamma sigma (delta - 1) with eps ~ N(0, L L') and
/// delta i.i.d. chi-square(1); gamma = 0 reproduces the well-specified draw
/// on the same stream.
Eigen::VectorXd gen_misspecified_u(const Eigen::VectorXd& mu,
                                   const Eigen::MatrixXd& sigma_chol, double gamma,
                                   double sigma, Rng& rng);

/// TP/FP/FN on (taxon, covariate) pairs ignoring sign; empty truth counts as
/// fully recalled, empty selection against nonempty truth as zero precision.
SelectionCounts selection_metrics(std::span<const SupportEntry> selected,
                                  std::span<const SupportEntry> truth);

SelectionSummary summarize_selection(std::span<const SelectionCounts> replicates);

/// Per-pair Spearman tests of every taxon column (zeros included) against
/// every covariate, Benjamini-Hochberg at fdr_q, direction = sign(rho).
/// Constant columns are skipped; the count lands in *n_skipped when given.
std::vector<SupportEntry> spearman_baseline(std::span<const CompositionSample> samples,
                                            std::span<const CovariateRecord> covariates,
                                            double fdr_q = 0.05,
                                            int* n_skipped = nullptr);

/// Move the given original taxon (1-based) into the reference slot, keeping
/// the relative order of the others.
std::vector<CompositionSample> relabel_reference(
    std::span<const CompositionSample> samples, int reference_taxon);

/// The planted support re-expressed against a new reference taxon: pair
/// (t, q) survives when beta_tq differs from the new reference's beta_rq.
std::vector<SupportEntry> relabel_truth(const CoefficientVector& truth_beta,
                                        int reference_taxon);

/// Dense-truth scenario: per replicate, generate, fit the structured-Sigma
/// likelihood, and fold per-parameter bias / percent bias / CI coverage into
/// one row per parameter group plus sd and rho rows.
MetricReport run_lowdim_scenario(const ScenarioConfig& config);

/// Sparse-truth scenario: per replicate, generate (optionally misspecified),
/// fit the penalized path with subject-level cross-validation, score the
/// selected support against the planted truth, and optionally run the
/// Spearman baseline on the same data.
MetricReport run_highdim_scenario(const ScenarioConfig& config);

}  // namespace mziln
