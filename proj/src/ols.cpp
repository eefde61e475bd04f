#include "mziln/ols.hpp"

#include <cmath>
#include <string>

#include "mziln/errors.hpp"

namespace mziln {

OlsFit fit_ols(const WhitenedSystem& system) {
  const Eigen::MatrixXd x = system.dense();
  if (x.rows() < x.cols()) {
    throw RankDeficient("fit_ols: " + std::to_string(x.rows()) + " rows for " +
                        std::to_string(x.cols()) + " coefficients");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < x.cols()) {
    throw RankDeficient("fit_ols: design rank " + std::to_string(qr.rank()) +
                        " < " + std::to_string(x.cols()));
  }
  OlsFit fit;
  fit.beta = qr.solve(system.responses());
  fit.fitted = x * fit.beta;
  fit.residuals = system.responses() - fit.fitted;
  fit.rss = fit.residuals.squaredNorm();
  return fit;
}

Eigen::VectorXd estimating_equation_residual(const WhitenedSystem& system,
                                             const Eigen::VectorXd& beta) {
  return system.apply_transpose(system.responses() - system.apply(beta));
}

Eigen::VectorXd fit_ridge(const WhitenedSystem& system, double lambda,
                          int max_iterations, double tolerance) {
  if (!(lambda > 0.0)) throw InvalidInput("fit_ridge: lambda must be positive");
  const int m = system.n_coefficients();
  const auto normal_op = [&](const Eigen::VectorXd& v) {
    return (system.apply_transpose(system.apply(v)) + lambda * v).eval();
  };
  const Eigen::VectorXd rhs = system.apply_transpose(system.responses());
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd r = rhs;  // residual of the normal equations at beta = 0
  Eigen::VectorXd p = r;
  double r2 = r.squaredNorm();
  const double threshold = tolerance * tolerance * rhs.squaredNorm();
  for (int it = 0; it < max_iterations && r2 > threshold; ++it) {
    const Eigen::VectorXd ap = normal_op(p);
    const double alpha = r2 / p.dot(ap);
    beta += alpha * p;
    r -= alpha * ap;
    const double r2_new = r.squaredNorm();
    p = r + (r2_new / r2) * p;
    r2 = r2_new;
  }
  return beta;
}

}  // namespace mziln
