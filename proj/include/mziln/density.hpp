#pragma once

#include <Eigen/Dense>
#include <map>
#include <span>
#include <vector>

#include "mziln/composition.hpp"

namespace mziln {

using PresencePattern = std::vector<bool>;

/// Parameters of the zero-inflated logistic-normal law: the latent normal
/// mean/covariance of the full log-ratio vector plus the probability mass of
/// each presence pattern. The mass map may be sparse (only observed patterns).
struct MzilnParams {
  Eigen::VectorXd mean;        // K
  Eigen::MatrixXd covariance;  // K x K, symmetric positive definite
  std::map<PresencePattern, double> discrete_masses;

  void validate() const;
};

/// Log density of an observed sample: log mass of its presence pattern plus,
/// when two or more taxa are present, the log normal density of the
/// subcomposition log-ratios under N(A mu, A Sigma A').
double mziln_log_density(const CompositionSample& sample, const MzilnParams& params);

/// Empirical pattern frequencies over a set of samples.
std::map<PresencePattern, double> estimate_discrete_masses(
    std::span<const CompositionSample> samples);

/// All admissible patterns (every nonempty subset of taxa). Only supported
/// for K+1 <= 20.
std::vector<PresencePattern> enumerate_patterns(int n_taxa);

}  // namespace mziln
