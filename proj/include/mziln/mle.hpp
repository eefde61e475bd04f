#pragma once

#include <Eigen/Dense>
#include <span>

#include "mziln/composition.hpp"
#include "mziln/design.hpp"
#include "mziln/system.hpp"

namespace mziln {

struct MleOptions {
  WorkingCovariance::Kind structure = WorkingCovariance::Kind::exchangeable;
  int max_outer_iterations = 200;
  double tolerance = 1e-8;  // relative change of l between outer iterations
};

struct MleFit {
  CoefficientVector beta;
  WorkingCovariance covariance;      // fitted Sigma
  Eigen::MatrixXd beta_covariance;   // sandwich estimate for beta
  double sd_se = 0.0;                // exchangeable structure only, else NaN
  double rho_se = 0.0;
  double log_likelihood = 0.0;       // l(beta, Sigma), constants dropped
  int n_outer_iterations = 0;
  bool converged = false;
  int n_subjects_used = 0;
  int n_subjects_skipped = 0;
};

/// Maximum-likelihood fit of the continuous part with a structured Sigma:
/// alternates generalized least squares for beta with a numerical Sigma
/// update (2-D quasi-Newton over (log sd, atanh rho) for the exchangeable
/// structure; log-Cholesky gradient ascent for the unstructured one) until l
/// moves by less than the tolerance. Non-convergence keeps the last iterate
/// and clears `converged`.
MleFit fit_mle_lowdim(std::span<const CompositionSample> samples,
                      std::span<const CovariateRecord> covariates,
                      const MleOptions& options = {});

/// Model-robust covariance of the least-squares estimator:
/// B^{-1} M B^{-1} with B = sum_i X~_i' X~_i and M = sum_i X~_i' r_i r_i' X~_i
/// over per-subject whitened residual blocks r_i.
Eigen::MatrixXd sandwich_covariance(const WhitenedSystem& system,
                                    const Eigen::VectorXd& beta);

struct ConfidenceIntervals {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

/// Wald intervals beta_m +/- z_{(1+level)/2} * se_m from a covariance matrix.
ConfidenceIntervals confidence_intervals(const Eigen::VectorXd& beta_hat,
                                         const Eigen::MatrixXd& covariance,
                                         double level = 0.95);

/// l(beta, Sigma) = 0.5 sum_i log|Omega_i| - 0.5 sum_i ||U~_i - X~_i beta||^2
/// over subjects with two or more nonzero taxa (additive constants dropped).
double profile_log_likelihood(std::span<const CompositionSample> samples,
                              std::span<const CovariateRecord> covariates,
                              const CoefficientVector& beta,
                              const WorkingCovariance& working);

}  // namespace mziln
