#include "mziln/system.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <string>

#include "mziln/errors.hpp"

namespace mziln {

Eigen::MatrixXd WhitenedBlock::dense_x(int n_ratios) const {
  const int q1 = static_cast<int>(ext_x.size());
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n_rows(), n_ratios * q1);
  for (std::size_t b = 0; b < taxa.size(); ++b) {
    const int offset = (taxa[b] - 1) * q1;
    x.block(0, offset, n_rows(), q1) = weights.col(static_cast<int>(b)) * ext_x.transpose();
  }
  return x;
}

Eigen::MatrixXd identity_whitening_root(int order, bool reference_block) {
  if (order < 2) throw InvalidInput("identity_whitening_root: order must be >= 2");
  const int d = order - 1;  // L - 1 log-ratio rows
  Eigen::MatrixXd w = Eigen::MatrixXd::Identity(d, d);
  if (!reference_block) return w;  // reference present: A A' = I
  // A A' = I + 11'; its inverse square root is I - c 11'.
  const double c = (1.0 - 1.0 / std::sqrt(static_cast<double>(order))) / d;
  w.array() -= c;
  return w;
}

WhitenedBlock whiten_subject(const SubcompositionTransform& transform,
                             const CovariateRecord& record,
                             const Eigen::VectorXd& u_sub,
                             const WorkingCovariance& working) {
  if (transform.order() < 2)
    throw DegenerateSample("whiten_subject: subject has no log-ratios");
  const int rows = transform.order() - 1;  // L-1 log-ratio rows
  if (u_sub.size() != rows) {
    throw InvalidInput("whiten_subject: response length " + std::to_string(u_sub.size()) +
                       " does not match the " + std::to_string(rows) +
                       " rows of the transform");
  }
  const bool ref_block = !transform.reference_is_last();

  Eigen::MatrixXd w;
  if (working.kind == WorkingCovariance::Kind::identity) {
    w = identity_whitening_root(transform.order(), ref_block);
  } else {
    const int n_ratios = transform.n_taxa - 1;
    const Eigen::MatrixXd sigma = working.materialize(n_ratios);
    const Eigen::MatrixXd s = transform.conjugate(sigma);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
    if (eig.info() != Eigen::Success) {
      throw SingularCovariance("whiten_subject: eigendecomposition failed");
    }
    const Eigen::VectorXd& values = eig.eigenvalues();
    const double max_value = values.maxCoeff();
    if (!(max_value > 0.0) || values.minCoeff() <= 1e-12 * max_value) {
      throw SingularCovariance("whiten_subject: projected covariance is numerically singular");
    }
    w = eig.eigenvectors() * values.cwiseSqrt().cwiseInverse().asDiagonal() *
        eig.eigenvectors().transpose();
  }

  WhitenedBlock block;
  block.taxa.reserve(static_cast<std::size_t>(rows) + (ref_block ? 1 : 0));
  for (int l = 0; l < rows; ++l) block.taxa.push_back(transform.nonzero_indices[l]);
  if (ref_block) block.taxa.push_back(transform.last_nonzero());

  // G = W C, where C maps coefficient blocks to rows: C[l, l] = 1 and, when
  // the reference taxon has its own block, C[l, last] = -1.
  const int n_blocks = static_cast<int>(block.taxa.size());
  block.weights.resize(rows, n_blocks);
  block.weights.leftCols(rows) = w;
  if (ref_block) block.weights.col(n_blocks - 1) = -w.rowwise().sum();

  const int q1 = static_cast<int>(record.x.size()) + 1;
  block.ext_x.resize(q1);
  block.ext_x[0] = 1.0;
  block.ext_x.tail(q1 - 1) = record.x;

  block.u_tilde = w * u_sub;
  return block;
}

WhitenedSystem::WhitenedSystem(std::vector<WhitenedBlock> blocks, int n_ratios,
                               int n_covariates, int n_subjects_skipped)
    : blocks_(std::move(blocks)),
      n_ratios_(n_ratios),
      n_covariates_(n_covariates),
      n_subjects_skipped_(n_subjects_skipped) {
  if (blocks_.empty()) throw EmptySystem("WhitenedSystem: no eligible subjects");
  row_offsets_.reserve(blocks_.size() + 1);
  row_offsets_.push_back(0);
  for (const WhitenedBlock& b : blocks_) row_offsets_.push_back(row_offsets_.back() + b.n_rows());
  responses_.resize(row_offsets_.back());
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    responses_.segment(row_offsets_[i], blocks_[i].n_rows()) = blocks_[i].u_tilde;
  }
  build_index();
}

void WhitenedSystem::build_index() {
  taxa_index_.assign(static_cast<std::size_t>(n_ratios_) + 1, {});
  for (int b = 0; b < static_cast<int>(blocks_.size()); ++b) {
    const std::vector<int>& taxa = blocks_[b].taxa;
    for (int c = 0; c < static_cast<int>(taxa.size()); ++c) {
      taxa_index_[taxa[c]].emplace_back(b, c);
    }
  }
  const int q1 = n_covariates_ + 1;
  column_norms2_ = Eigen::VectorXd::Zero(n_coefficients());
  for (int k = 1; k <= n_ratios_; ++k) {
    Eigen::VectorXd x2 = Eigen::VectorXd::Zero(q1);
    for (const auto& [b, c] : taxa_index_[k]) {
      const double col2 = blocks_[b].weights.col(c).squaredNorm();
      for (int j = 0; j < q1; ++j) {
        const double xj = blocks_[b].ext_x[j];
        x2[j] += col2 * xj * xj;
      }
    }
    for (int j = 0; j < q1; ++j) column_norms2_[(k - 1) * q1 + j] = x2[j];
  }
}

std::pair<int, int> WhitenedSystem::row_span(int block) const {
  return {row_offsets_[block], row_offsets_[block + 1]};
}

Eigen::VectorXd WhitenedSystem::apply(const Eigen::VectorXd& beta) const {
  if (beta.size() != n_coefficients()) {
    throw InvalidInput("apply: coefficient length mismatch");
  }
  const int q1 = n_covariates_ + 1;
  Eigen::VectorXd out(n_rows());
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const WhitenedBlock& blk = blocks_[i];
    const int nb = static_cast<int>(blk.taxa.size());
    Eigen::VectorXd s(nb);
    for (int b = 0; b < nb; ++b) {
      s[b] = blk.ext_x.dot(beta.segment((blk.taxa[b] - 1) * q1, q1));
    }
    out.segment(row_offsets_[i], blk.n_rows()).noalias() = blk.weights * s;
  }
  return out;
}

Eigen::VectorXd WhitenedSystem::apply_transpose(const Eigen::VectorXd& r) const {
  if (r.size() != n_rows()) throw InvalidInput("apply_transpose: residual length mismatch");
  const int q1 = n_covariates_ + 1;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n_coefficients());
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const WhitenedBlock& blk = blocks_[i];
    const Eigen::VectorXd t =
        blk.weights.transpose() * r.segment(row_offsets_[i], blk.n_rows());
    for (int b = 0; b < static_cast<int>(blk.taxa.size()); ++b) {
      out.segment((blk.taxa[b] - 1) * q1, q1) += t[b] * blk.ext_x;
    }
  }
  return out;
}

double WhitenedSystem::column_dot(int m, const Eigen::VectorXd& r) const {
  const int q1 = n_covariates_ + 1;
  const int k = m / q1 + 1;
  const int j = m % q1;
  double acc = 0.0;
  for (const auto& [b, c] : taxa_index_[k]) {
    const WhitenedBlock& blk = blocks_[b];
    acc += blk.ext_x[j] *
           blk.weights.col(c).dot(r.segment(row_offsets_[b], blk.n_rows()));
  }
  return acc;
}

void WhitenedSystem::column_axpy(int m, double a, Eigen::VectorXd& r) const {
  const int q1 = n_covariates_ + 1;
  const int k = m / q1 + 1;
  const int j = m % q1;
  for (const auto& [b, c] : taxa_index_[k]) {
    const WhitenedBlock& blk = blocks_[b];
    r.segment(row_offsets_[b], blk.n_rows()) += a * blk.ext_x[j] * blk.weights.col(c);
  }
}

Eigen::MatrixXd WhitenedSystem::dense() const {
  if (n_coefficients() > kDenseCoefficientLimit) {
    throw InvalidInput("dense: system has " + std::to_string(n_coefficients()) +
                       " coefficients, beyond the dense limit of " +
                       std::to_string(kDenseCoefficientLimit));
  }
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n_rows(), n_coefficients());
  const int q1 = n_covariates_ + 1;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const WhitenedBlock& blk = blocks_[i];
    for (int b = 0; b < static_cast<int>(blk.taxa.size()); ++b) {
      x.block(row_offsets_[i], (blk.taxa[b] - 1) * q1, blk.n_rows(), q1) =
          blk.weights.col(b) * blk.ext_x.transpose();
    }
  }
  return x;
}

WhitenedSystem WhitenedSystem::subset(const std::vector<int>& block_ids) const {
  std::vector<WhitenedBlock> picked;
  picked.reserve(block_ids.size());
  for (int id : block_ids) {
    if (id < 0 || id >= static_cast<int>(blocks_.size())) {
      throw InvalidInput("subset: block id out of range");
    }
    picked.push_back(blocks_[id]);
  }
  return WhitenedSystem(std::move(picked), n_ratios_, n_covariates_, 0);
}

WhitenedSystem assemble_system(std::span<const CompositionSample> samples,
                               std::span<const CovariateRecord> covariates,
                               const WorkingCovariance& working) {
  if (samples.size() != covariates.size()) {
    throw InvalidInput("assemble_system: " + std::to_string(samples.size()) +
                       " samples vs " + std::to_string(covariates.size()) +
                       " covariate records");
  }
  if (samples.empty()) throw EmptySystem("assemble_system: no subjects");
  const int n_taxa = static_cast<int>(samples[0].values.size());
  const int q = static_cast<int>(covariates[0].x.size());

  std::vector<WhitenedBlock> blocks;
  blocks.reserve(samples.size());
  int skipped = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (static_cast<int>(samples[i].values.size()) != n_taxa) {
      throw InvalidInput("assemble_system: inconsistent taxon count at subject " +
                         std::to_string(i));
    }
    if (static_cast<int>(covariates[i].x.size()) != q) {
      throw InvalidInput("assemble_system: inconsistent covariate count at subject " +
                         std::to_string(i));
    }
    int n_present = 0;
    for (bool z : samples[i].presence) n_present += z ? 1 : 0;
    if (n_present < 2) {
      ++skipped;
      continue;
    }
    const auto& [transform, u_sub] = log_ratio_transform(samples[i]);
    WhitenedBlock blk = whiten_subject(transform, covariates[i], u_sub, working);
    blk.subject_index = static_cast<int>(i);
    blocks.push_back(std::move(blk));
  }
  if (blocks.empty()) {
    throw EmptySystem("assemble_system: every subject has fewer than two nonzero taxa");
  }
  return WhitenedSystem(std::move(blocks), n_taxa - 1, q, skipped);
}

}  // namespace mziln
