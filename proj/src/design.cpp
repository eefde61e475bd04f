#include "mziln/design.hpp"

#include <cmath>

#include "mziln/errors.hpp"

namespace mziln {

CoefficientVector::CoefficientVector(Eigen::VectorXd b, int k, int q)
    : beta(std::move(b)), n_ratios(k), n_covariates(q) {
  if (beta.size() != static_cast<Eigen::Index>(k) * (q + 1))
    throw InvalidInput("CoefficientVector: length must be K(Q+1)");
}

Eigen::VectorXd CoefficientVector::taxon_coefficients(int k) const {
  if (k < 1 || k > n_ratios) throw InvalidInput("taxon_coefficients: k out of range");
  const int width = n_covariates + 1;
  return beta.segment(static_cast<Eigen::Index>(k - 1) * width, width);
}

Eigen::VectorXd CoefficientVector::covariate_coefficients(int q) const {
  if (q < 0 || q > n_covariates) throw InvalidInput("covariate_coefficients: q out of range");
  const int width = n_covariates + 1;
  Eigen::VectorXd out(n_ratios);
  for (int k = 0; k < n_ratios; ++k) out[k] = beta[static_cast<Eigen::Index>(k) * width + q];
  return out;
}

double CoefficientVector::entry(int k, int q) const {
  if (k < 1 || k > n_ratios || q < 0 || q > n_covariates)
    throw InvalidInput("CoefficientVector::entry: index out of range");
  return beta[static_cast<Eigen::Index>(k - 1) * (n_covariates + 1) + q];
}

void CoefficientVector::set_entry(int k, int q, double value) {
  if (k < 1 || k > n_ratios || q < 0 || q > n_covariates)
    throw InvalidInput("CoefficientVector::set_entry: index out of range");
  beta[static_cast<Eigen::Index>(k - 1) * (n_covariates + 1) + q] = value;
}

WorkingCovariance WorkingCovariance::identity() {
  WorkingCovariance w;
  w.kind = Kind::identity;
  return w;
}

WorkingCovariance WorkingCovariance::exchangeable(double sd, double rho) {
  WorkingCovariance w;
  w.kind = Kind::exchangeable;
  w.sd = sd;
  w.rho = rho;
  return w;
}

WorkingCovariance WorkingCovariance::unstructured(Eigen::MatrixXd sigma) {
  WorkingCovariance w;
  w.kind = Kind::unstructured;
  w.sigma = std::move(sigma);
  return w;
}

Eigen::MatrixXd WorkingCovariance::materialize(int n_ratios) const {
  switch (kind) {
    case Kind::identity:
      return Eigen::MatrixXd::Identity(n_ratios, n_ratios);
    case Kind::exchangeable: {
      Eigen::MatrixXd s = Eigen::MatrixXd::Constant(n_ratios, n_ratios, sd * sd * rho);
      s.diagonal().setConstant(sd * sd);
      return s;
    }
    case Kind::unstructured:
      return sigma;
  }
  throw InvalidInput("WorkingCovariance: unknown kind");
}

void WorkingCovariance::validate(int n_ratios) const {
  switch (kind) {
    case Kind::identity:
      return;
    case Kind::exchangeable: {
      if (!(sd > 0.0)) throw InvalidInput("exchangeable covariance: sd must be positive");
      const double lower = n_ratios > 1 ? -1.0 / static_cast<double>(n_ratios - 1) : -1.0;
      if (!(rho > lower && rho < 1.0))
        throw InvalidInput("exchangeable covariance: rho outside (-1/(K-1), 1)");
      return;
    }
    case Kind::unstructured: {
      if (sigma.rows() != n_ratios || sigma.cols() != n_ratios)
        throw InvalidInput("unstructured covariance: wrong shape");
      if (!sigma.isApprox(sigma.transpose(), 1e-10))
        throw InvalidInput("unstructured covariance: not symmetric");
      Eigen::LLT<Eigen::MatrixXd> llt(sigma);
      if (llt.info() != Eigen::Success)
        throw InvalidInput("unstructured covariance: not positive definite");
      return;
    }
  }
}

double DesignRowBlock::row_dot(const CoefficientVector& beta, int k) const {
  return ext_x.dot(beta.taxon_coefficients(k));
}

Eigen::MatrixXd DesignRowBlock::dense() const {
  const int width = static_cast<int>(ext_x.size());
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n_ratios, n_ratios * width);
  for (int k = 0; k < n_ratios; ++k)
    x.block(k, k * width, 1, width) = ext_x.transpose();
  return x;
}

DesignRowBlock build_design_row_block(const CovariateRecord& record, int n_ratios) {
  for (Eigen::Index q = 0; q < record.x.size(); ++q)
    if (!std::isfinite(record.x[q])) throw InvalidInput("covariates must be finite");
  DesignRowBlock block;
  block.n_ratios = n_ratios;
  block.ext_x.resize(record.x.size() + 1);
  block.ext_x[0] = 1.0;
  block.ext_x.tail(record.x.size()) = record.x;
  return block;
}

}  // namespace mziln
