#pragma once

#include <Eigen/Dense>
#include <span>
#include <utility>
#include <vector>

#include "mziln/composition.hpp"
#include "mziln/design.hpp"

namespace mziln {

/// One subject's whitened rows in factored form. The L-1 rows of
/// Omega^{1/2} A X span only the coefficient blocks of the subject's nonzero
/// taxa; row r of the block for taxon `taxa[b]` is `weights(r, b) * (1, x')`.
/// Everything downstream (matrix products, column access, dense export) reads
/// this factored form, so the stacked design is never materialized for large
/// problems.
struct WhitenedBlock {
  std::vector<int> taxa;     // coefficient blocks touched, 1-based, ascending
  Eigen::VectorXd ext_x;     // (1, x')
  Eigen::MatrixXd weights;   // (L-1) x taxa.size()
  Eigen::VectorXd u_tilde;   // whitened responses, length L-1
  int subject_index = -1;    // position in the input sample list

  int n_rows() const { return static_cast<int>(u_tilde.size()); }
  Eigen::MatrixXd dense_x(int n_ratios) const;  // (L-1) x M
};

/// Whitening root Omega^{1/2} for the identity working covariance, in closed
/// form. `order` is the subcomposition order L (nonzero taxa); the result is
/// (L-1) x (L-1). When the reference taxon is absent the transform carries
/// its -1 column (`reference_block`), A A' = I + 11', and the root is
/// I - c 11' with c = (1 - 1/sqrt(L)) / (L - 1); otherwise A A' = I and the
/// root is the identity.
Eigen::MatrixXd identity_whitening_root(int order, bool reference_block);

/// Whiten one subject's rows and response with Omega^{1/2},
/// Omega = (A Sigma A')^{-1}. Identity working covariance uses the closed
/// form; other covariances go through an eigendecomposition square root.
WhitenedBlock whiten_subject(const SubcompositionTransform& transform,
                             const CovariateRecord& record,
                             const Eigen::VectorXd& u_sub,
                             const WorkingCovariance& working);

/// Stacked whitened regression system over all subjects with two or more
/// nonzero taxa.
class WhitenedSystem {
 public:
  WhitenedSystem(std::vector<WhitenedBlock> blocks, int n_ratios, int n_covariates,
                 int n_subjects_skipped);

  int n_rows() const { return static_cast<int>(responses_.size()); }           // R
  int n_coefficients() const { return n_ratios_ * (n_covariates_ + 1); }       // M
  int n_ratios() const { return n_ratios_; }                                   // K
  int n_covariates() const { return n_covariates_; }                           // Q
  int n_subjects_used() const { return static_cast<int>(blocks_.size()); }
  int n_subjects_skipped() const { return n_subjects_skipped_; }

  const std::vector<WhitenedBlock>& blocks() const { return blocks_; }
  const Eigen::VectorXd& responses() const { return responses_; }              // stacked U~
  /// [first_row, past_end_row) of block b in the stacked system.
  std::pair<int, int> row_span(int block) const;

  Eigen::VectorXd apply(const Eigen::VectorXd& beta) const;                    // X~ beta
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& r) const;             // X~' r
  double column_norm2(int m) const { return column_norms2_[m]; }
  double column_dot(int m, const Eigen::VectorXd& r) const;
  void column_axpy(int m, double a, Eigen::VectorXd& r) const;

  /// Dense R x M export; refuses systems beyond the dense coefficient limit.
  Eigen::MatrixXd dense() const;

  /// New system over the given block ids (cross-validation folds).
  WhitenedSystem subset(const std::vector<int>& block_ids) const;

  static constexpr int kDenseCoefficientLimit = 5000;

 private:
  void build_index();

  std::vector<WhitenedBlock> blocks_;
  std::vector<int> row_offsets_;
  Eigen::VectorXd responses_;
  int n_ratios_ = 0;
  int n_covariates_ = 0;
  int n_subjects_skipped_ = 0;
  // per taxon (1-based, index 0 unused): (block id, column in weights)
  std::vector<std::vector<std::pair<int, int>>> taxa_index_;
  Eigen::VectorXd column_norms2_;
};

/// Assemble the stacked system; subjects with a single nonzero taxon are
/// skipped and counted. Throws EmptySystem when nothing is eligible.
WhitenedSystem assemble_system(std::span<const CompositionSample> samples,
                               std::span<const CovariateRecord> covariates,
                               const WorkingCovariance& working);

}  // namespace mziln
