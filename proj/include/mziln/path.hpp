#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <vector>

#include "mziln/composition.hpp"
#include "mziln/design.hpp"
#include "mziln/penalty.hpp"
#include "mziln/system.hpp"

namespace mziln {

struct PathOptions {
  int grid_size = 100;
  double lambda_min_ratio = 0.01;
  double tolerance = 1e-7;   // max relative coefficient change per sweep
  int max_sweeps = 10000;    // per lambda
  bool standardize = true;   // scale columns to unit root-mean-square
};

struct PathResult {
  std::vector<double> lambdas;                  // descending
  std::vector<CoefficientVector> coefficients;  // one per lambda
  std::vector<int> support_sizes;               // nonzero penalized coefficients
  std::vector<double> cv_mse_mean;              // filled by cross_validate
  std::vector<double> cv_mse_se;
  std::optional<double> lambda_selected;
  std::optional<int> selected_index;

  const CoefficientVector& selected_coefficients() const;
};

/// Cyclic coordinate descent with active-set iteration and warm starts down a
/// descending lambda grid (default: grid_size log-spaced points from
/// lambda_max to lambda_min_ratio * lambda_max). Intercept blocks are fitted
/// without penalty unless the spec penalizes them; the penalized objective is
/// asserted non-increasing across every sweep.
PathResult fit_penalized(const WhitenedSystem& system, const PenaltySpec& penalty,
                         const std::vector<double>& lambda_grid = {},
                         const PathOptions& options = {});

struct CrossValidationOptions {
  PathOptions path;
  bool one_se_rule = false;
};

/// Subject-level k-fold cross-validation: eligible subjects are shuffled with
/// the seed and dealt round-robin into folds, the lambda grid comes from the
/// full-data path, and each fold's held-out MSE is averaged per lambda.
/// Selects the smallest lambda attaining the minimum mean MSE (or the one-SE
/// choice when enabled) and returns the full-data path with the CV columns
/// filled in.
PathResult cross_validate(std::span<const CompositionSample> samples,
                          std::span<const CovariateRecord> covariates,
                          const WorkingCovariance& working,
                          const PenaltySpec& penalty, int folds, std::uint64_t seed,
                          const CrossValidationOptions& options = {});

struct SupportEntry {
  int taxon = 0;      // 1-based k
  int covariate = 0;  // 1-based q
  int direction = 0;  // sign of the coefficient
};

/// Nonzero (taxon, covariate) pairs of the selected fit, intercepts excluded,
/// each tagged with the coefficient sign.
std::vector<SupportEntry> selected_support(const PathResult& path,
                                           double threshold = 0.0);

}  // namespace mziln
