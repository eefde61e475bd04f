#pragma once

#include <Eigen/Dense>
#include <string>

namespace mziln {

struct CovariateRecord {
  Eigen::VectorXd x;  // Q covariates
  std::string subject_id;
};

/// Stacked coefficient vector of length M = K(Q+1): one (intercept, slopes)
/// block per non-reference taxon.
struct CoefficientVector {
  Eigen::VectorXd beta;  // M
  int n_ratios = 0;      // K
  int n_covariates = 0;  // Q

  CoefficientVector() = default;
  CoefficientVector(Eigen::VectorXd b, int k, int q);

  int dim() const { return n_ratios * (n_covariates + 1); }

  /// Coefficients of taxon k (1-based): the contiguous (Q+1)-block
  /// (intercept first, then one slope per covariate).
  Eigen::VectorXd taxon_coefficients(int k) const;

  /// Coefficients of covariate q (0 = intercepts, 1..Q): the stride-(Q+1)
  /// slice across taxa, length K.
  Eigen::VectorXd covariate_coefficients(int q) const;

  double entry(int k, int q) const;             // 1-based taxon, 0-based covariate
  void set_entry(int k, int q, double value);
};

/// Covariance plugged into per-subject whitening. Identity reproduces the
/// independence working structure; exchangeable and unstructured support the
/// low-dimensional likelihood fit.
struct WorkingCovariance {
  enum class Kind { identity, exchangeable, unstructured };

  Kind kind = Kind::identity;
  double sd = 1.0;   // exchangeable
  double rho = 0.0;  // exchangeable
  Eigen::MatrixXd sigma;  // unstructured

  static WorkingCovariance identity();
  static WorkingCovariance exchangeable(double sd, double rho);
  static WorkingCovariance unstructured(Eigen::MatrixXd sigma);

  /// Dense K x K matrix.
  Eigen::MatrixXd materialize(int n_ratios) const;

  /// Throws InvalidInput when the parameters are not a valid covariance for
  /// K log-ratios (exchangeable needs sd > 0 and -1/(K-1) < rho < 1).
  void validate(int n_ratios) const;
};

/// The per-subject design I_K (x) (1, x'): K rows over M coefficients, one
/// (1, x') block per row. Kept in block form; rows are never materialized
/// unless asked for.
struct DesignRowBlock {
  Eigen::VectorXd ext_x;  // (1, x'), length Q+1
  int n_ratios = 0;       // K

  int n_coefficients() const {
    return n_ratios * static_cast<int>(ext_x.size());
  }
  /// (X_i beta)[k], 1-based row.
  double row_dot(const CoefficientVector& beta, int k) const;
  Eigen::MatrixXd dense() const;  // K x M, for tests and small problems
};

DesignRowBlock build_design_row_block(const CovariateRecord& record, int n_ratios);

}  // namespace mziln
