#include "mziln/density.hpp"

#include <cmath>

#include "mziln/errors.hpp"

namespace mziln {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
}

void MzilnParams::validate() const {
  const Eigen::Index k_dim = mean.size();
  if (covariance.rows() != k_dim || covariance.cols() != k_dim)
    throw InvalidInput("MzilnParams: covariance shape does not match mean");
  if (!covariance.isApprox(covariance.transpose(), 1e-10))
    throw InvalidInput("MzilnParams: covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance);
  if (eig.eigenvalues().minCoeff() <= 0.0)
    throw SingularCovariance("MzilnParams: covariance is not positive definite");
  double total = 0.0;
  for (const auto& [pattern, mass] : discrete_masses) {
    if (static_cast<Eigen::Index>(pattern.size()) != k_dim + 1)
      throw InvalidInput("MzilnParams: pattern length does not match K+1");
    if (!(mass > 0.0 && mass <= 1.0))
      throw InvalidInput("MzilnParams: pattern mass outside (0,1]");
    total += mass;
  }
  const std::size_t n_patterns = (static_cast<std::size_t>(1) << (k_dim + 1)) - 1;
  if (discrete_masses.size() == n_patterns && std::fabs(total - 1.0) > 1e-9)
    throw InvalidInput("MzilnParams: complete mass map does not sum to 1");
}

double mziln_log_density(const CompositionSample& sample, const MzilnParams& params) {
  const auto it = params.discrete_masses.find(sample.presence);
  if (it == params.discrete_masses.end())
    throw MissingMass("mziln_log_density: presence pattern has no mass");
  const double log_mass = std::log(it->second);
  if (sample.n_present() < 2) return log_mass;

  const auto [transform, u_sub] = log_ratio_transform(sample);
  const Eigen::VectorXd mean_sub = transform.apply(params.mean);
  const Eigen::MatrixXd cov_sub = transform.conjugate(params.covariance);
  Eigen::LLT<Eigen::MatrixXd> llt(cov_sub);
  if (llt.info() != Eigen::Success)
    throw SingularCovariance("mziln_log_density: subcomposition covariance not SPD");
  const Eigen::VectorXd centered = u_sub - mean_sub;
  const Eigen::VectorXd half = llt.matrixL().solve(centered);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < cov_sub.rows(); ++i)
    log_det += std::log(llt.matrixL()(i, i));
  const double dim = static_cast<double>(cov_sub.rows());
  return log_mass - 0.5 * half.squaredNorm() - log_det - 0.5 * dim * kLogTwoPi;
}

std::map<PresencePattern, double> estimate_discrete_masses(
    std::span<const CompositionSample> samples) {
  std::map<PresencePattern, double> counts;
  for (const auto& sample : samples) counts[sample.presence] += 1.0;
  const double n = static_cast<double>(samples.size());
  for (auto& [pattern, count] : counts) count /= n;
  return counts;
}

std::vector<PresencePattern> enumerate_patterns(int n_taxa) {
  if (n_taxa < 1 || n_taxa > 20)
    throw InvalidInput("enumerate_patterns: supported only for 1 <= K+1 <= 20");
  std::vector<PresencePattern> patterns;
  const std::uint32_t limit = 1u << n_taxa;
  patterns.reserve(limit - 1);
  for (std::uint32_t bits = 1; bits < limit; ++bits) {
    PresencePattern pattern(static_cast<std::size_t>(n_taxa));
    for (int k = 0; k < n_taxa; ++k) pattern[static_cast<std::size_t>(k)] = (bits >> k) & 1u;
    patterns.push_back(std::move(pattern));
  }
  return patterns;
}

}  // namespace mziln
