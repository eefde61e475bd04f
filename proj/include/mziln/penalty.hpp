#pragma once

#include <Eigen/Dense>
#include <string>

namespace mziln {

/// Penalty family and tuning parameters for the penalized least-squares
/// solver. `gamma` is the concavity parameter of SCAD/MCP; `alpha` the
/// elastic-net mixing; `adaptive_weights` per-coefficient multipliers on
/// lambda for the adaptive LASSO (empty means "compute from a ridge pilot").
struct PenaltySpec {
  enum class Family { lasso, adaptive_lasso, elastic_net, scad, mcp };

  Family family = Family::lasso;
  double lambda = 0.0;
  double gamma = 0.0;
  double alpha = 0.5;
  Eigen::VectorXd adaptive_weights;  // length M or empty
  bool penalize_intercepts = false;

  static PenaltySpec lasso(double lambda);
  static PenaltySpec adaptive_lasso(double lambda,
                                    Eigen::VectorXd weights = Eigen::VectorXd());
  static PenaltySpec elastic_net(double lambda, double alpha = 0.5);
  static PenaltySpec scad(double lambda, double gamma = 3.7);
  static PenaltySpec mcp(double lambda, double gamma = 3.0);

  PenaltySpec with_lambda(double new_lambda) const;

  /// Throws InvalidInput on out-of-range parameters (MCP needs gamma > 1,
  /// SCAD gamma > 2, alpha in (0,1], weights nonnegative).
  void validate() const;

  /// pen(|b|) for a single coefficient; `weight` scales lambda (adaptive
  /// LASSO), 1 otherwise.
  double penalty_value(double b, double weight = 1.0) const;
};

const char* penalty_family_name(PenaltySpec::Family family);
PenaltySpec::Family parse_penalty_family(const std::string& name);

/// argmin_b 0.5 * norm * (b - z/norm)^2 + pen(|b|), the coordinate-wise
/// update for every supported family. The rules are closed-form except for
/// MCP/SCAD when the column norm is at or below the concavity knee
/// (norm <= 1/gamma resp. 1/(gamma-1)), where a fine 1-D grid search over
/// [0, z/norm] takes over (accurate to ~|z|/norm * 4e-6).
double univariate_threshold(double z, double norm, const PenaltySpec& penalty,
                            double weight = 1.0);

}  // namespace mziln
