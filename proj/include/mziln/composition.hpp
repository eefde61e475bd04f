#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

namespace mziln {

/// Observed relative-abundance vector on the simplex, with its presence
/// pattern. `presence[k]` holds exactly when `values[k] > 0`.
struct CompositionSample {
  Eigen::VectorXd values;      // K+1 entries, nonnegative, sum to 1
  std::vector<bool> presence;  // derived from values

  /// Validates nonnegativity and sum-to-one (tolerance 1e-9), renormalizes the
  /// residual rounding error away, and derives the presence pattern.
  static CompositionSample from_values(Eigen::VectorXd v);

  int n_taxa() const { return static_cast<int>(values.size()); }  // K+1
  int n_present() const;
};

/// Selection/difference matrix mapping full log-ratios to the log-ratios of
/// the subcomposition on `nonzero_indices`. Row l picks taxon k_l against the
/// last nonzero taxon k_L; when k_L is not the reference taxon, column k_L of
/// the dense matrix is all -1.
struct SubcompositionTransform {
  std::vector<int> nonzero_indices;  // 1-based, strictly increasing, size L >= 2
  int reference_index = 0;           // K+1, 1-based
  int n_taxa = 0;                    // K+1

  int order() const { return static_cast<int>(nonzero_indices.size()); }  // L
  int last_nonzero() const { return nonzero_indices.back(); }             // k_L
  bool reference_is_last() const { return last_nonzero() == n_taxa; }

  /// Dense (L-1) x K matrix. For inspection and small problems; the other
  /// members compute the same maps from the index set directly.
  Eigen::MatrixXd dense_matrix() const;

  /// A * u for a full K-vector of log-ratios.
  Eigen::VectorXd apply(const Eigen::VectorXd& u_full) const;

  /// A * S * A^T for a K x K matrix, computed entrywise from the index set.
  Eigen::MatrixXd conjugate(const Eigen::MatrixXd& s) const;

  /// A^T * T * A for an (L-1) x (L-1) matrix, scattered back to K x K. This is
  /// the adjoint of `conjugate` and carries covariance-gradient contributions
  /// from subject space to the full parameter space.
  Eigen::MatrixXd conjugate_adjoint(const Eigen::MatrixXd& t) const;
};

/// Log-ratio transform of the nonzero subcomposition against its last nonzero
/// taxon. Throws DegenerateSample when fewer than two taxa are present.
std::pair<SubcompositionTransform, Eigen::VectorXd> log_ratio_transform(
    const CompositionSample& sample);

/// Inverse of the log-ratio transform: u in R^K to the all-positive
/// composition with reference entry 1 / (1 + sum exp(u)).
CompositionSample inverse_log_ratio(const Eigen::VectorXd& u);

/// Renormalize the indexed entries (1-based) to sum to one, dropping the rest.
CompositionSample subcomposition(const CompositionSample& sample,
                                 const std::vector<int>& indices);

/// Composition induced by an intercept block: softmax of the K coefficients
/// with an implicit 0 for the reference taxon.
Eigen::VectorXd baseline_composition(const Eigen::VectorXd& intercepts);

struct CovariateShift {
  Eigen::VectorXd shift;   // K+1, sums to 1
  std::vector<int> signs;  // +1 / -1 / 0 per taxon vs the neutral 1/(K+1)
};

/// Composition shift induced by one unit of a covariate, with the per-taxon
/// association sign (positive above 1/(K+1), negative below, 0 within 1e-12).
CovariateShift covariate_shift(const Eigen::VectorXd& slopes);

/// Overall disturbance magnitude sqrt(b' (I + 11')^{-1} b), evaluated through
/// the closed form b'b - (1'b)^2 / (K+1).
double disturbance_magnitude(const Eigen::VectorXd& slopes);

}  // namespace mziln
