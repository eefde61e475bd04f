#pragma once

#include <Eigen/Dense>

#include "mziln/system.hpp"

namespace mziln {

struct OlsFit {
  Eigen::VectorXd beta;
  Eigen::VectorXd fitted;     // X~ beta
  Eigen::VectorXd residuals;  // U~ - X~ beta
  double rss = 0.0;
};

/// Least squares on the whitened system via column-pivoted QR. Throws
/// RankDeficient when the stacked design does not have full column rank.
OlsFit fit_ols(const WhitenedSystem& system);

/// Estimating-equation value X~' (U~ - X~ beta); zero (to tolerance) at the
/// least-squares solution.
Eigen::VectorXd estimating_equation_residual(const WhitenedSystem& system,
                                             const Eigen::VectorXd& beta);

/// Ridge solution argmin ||U~ - X~ b||^2 + lambda ||b||^2 by conjugate
/// gradients on the normal equations; used as the pilot for adaptive weights
/// when the design is too large (or too collinear) for plain least squares.
Eigen::VectorXd fit_ridge(const WhitenedSystem& system, double lambda,
                          int max_iterations = 1000, double tolerance = 1e-10);

}  // namespace mziln
