#include "mziln/path.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mziln/errors.hpp"
#include "mziln/ols.hpp"
#include "mziln/rng.hpp"

namespace mziln {
namespace {

// Coordinate-descent state on standardized columns: column m of X~ is
// implicitly divided by scale[m] so every live column has squared norm R; the
// residual r tracks U~ - X~ beta with beta[m] = b[m] / scale[m].
struct Workspace {
  const WhitenedSystem* system = nullptr;
  PathOptions options;
  std::vector<char> penalized;
  Eigen::VectorXd scale;    // 0 flags an all-zero (dead) column
  Eigen::VectorXd norms;    // standardized squared column norms
  Eigen::VectorXd weights;  // lambda multipliers, 1 unless adaptive
  Eigen::VectorXd b;        // standardized coefficients
  Eigen::VectorXd r;        // current residual
  std::vector<int> all_coords;
  std::vector<int> free_coords;  // unpenalized
};

void recompute_residual(Workspace& ws) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(ws.b.size());
  for (Eigen::Index m = 0; m < ws.b.size(); ++m) {
    if (ws.scale[m] > 0.0) beta[m] = ws.b[m] / ws.scale[m];
  }
  ws.r = ws.system->responses() - ws.system->apply(beta);
}

double objective(const Workspace& ws, const PenaltySpec& penalty) {
  double value = 0.5 * ws.r.squaredNorm();
  for (int m : ws.all_coords) {
    if (ws.penalized[static_cast<std::size_t>(m)] && ws.b[m] != 0.0) {
      value += penalty.penalty_value(ws.b[m], ws.weights[m]);
    }
  }
  return value;
}

// One pass over `coords`; returns the largest relative coefficient change.
double sweep(Workspace& ws, const std::vector<int>& coords, const PenaltySpec& penalty) {
  double max_change = 0.0;
  for (int m : coords) {
    if (ws.scale[m] == 0.0) continue;
    const double old_b = ws.b[m];
    const double z =
        ws.system->column_dot(m, ws.r) / ws.scale[m] + ws.norms[m] * old_b;
    const double new_b =
        ws.penalized[static_cast<std::size_t>(m)]
            ? univariate_threshold(z, ws.norms[m], penalty, ws.weights[m])
            : z / ws.norms[m];
    if (new_b != old_b) {
      ws.system->column_axpy(m, (old_b - new_b) / ws.scale[m], ws.r);
      ws.b[m] = new_b;
      max_change = std::max(max_change, std::fabs(new_b - old_b) / (1.0 + std::fabs(old_b)));
    }
  }
  return max_change;
}

// Objective must not increase across a sweep. An apparent increase is
// re-checked against an exactly recomputed residual before declaring a solver
// bug, so accumulated axpy drift cannot trip it.
void check_monotone(Workspace& ws, const PenaltySpec& penalty, double& prev) {
  const double now = objective(ws, penalty);
  if (now > prev + 1e-10 * (1.0 + std::fabs(prev))) {
    recompute_residual(ws);
    const double exact = objective(ws, penalty);
    if (exact > prev + 1e-10 * (1.0 + std::fabs(prev))) {
      throw Error("coordinate descent: objective increased across a sweep (" +
                  std::to_string(prev) + " -> " + std::to_string(exact) + ")");
    }
    prev = exact;
    return;
  }
  prev = now;
}

// Full CD at one lambda: alternate one full sweep with active-set iteration;
// done when a full sweep moves nothing beyond tolerance.
void solve_at(Workspace& ws, const PenaltySpec& penalty) {
  recompute_residual(ws);
  double prev_obj = objective(ws, penalty);
  int sweeps = 0;
  while (sweeps < ws.options.max_sweeps) {
    const double full_change = sweep(ws, ws.all_coords, penalty);
    ++sweeps;
    check_monotone(ws, penalty, prev_obj);
    if (full_change < ws.options.tolerance) return;
    std::vector<int> active = ws.free_coords;
    for (int m : ws.all_coords) {
      if (ws.penalized[static_cast<std::size_t>(m)] && ws.b[m] != 0.0) active.push_back(m);
    }
    while (sweeps < ws.options.max_sweeps) {
      const double change = sweep(ws, active, penalty);
      ++sweeps;
      check_monotone(ws, penalty, prev_obj);
      if (change < ws.options.tolerance) break;
    }
  }
}

Workspace make_workspace(const WhitenedSystem& system, const PenaltySpec& penalty,
                         const PathOptions& options) {
  Workspace ws;
  ws.system = &system;
  ws.options = options;
  const int m_total = system.n_coefficients();
  const int q1 = system.n_covariates() + 1;
  ws.penalized.resize(static_cast<std::size_t>(m_total));
  ws.scale.resize(m_total);
  ws.norms.resize(m_total);
  ws.weights = Eigen::VectorXd::Ones(m_total);
  ws.b = Eigen::VectorXd::Zero(m_total);
  const double rows = static_cast<double>(system.n_rows());
  for (int m = 0; m < m_total; ++m) {
    const bool intercept = (m % q1) == 0;
    ws.penalized[static_cast<std::size_t>(m)] = penalty.penalize_intercepts || !intercept;
    const double norm2 = system.column_norm2(m);
    if (norm2 <= 0.0) {
      ws.scale[m] = 0.0;
      ws.norms[m] = 0.0;
      continue;
    }
    ws.scale[m] = options.standardize ? std::sqrt(norm2 / rows) : 1.0;
    ws.norms[m] = norm2 / (ws.scale[m] * ws.scale[m]);
    ws.all_coords.push_back(m);
    if (!ws.penalized[static_cast<std::size_t>(m)]) ws.free_coords.push_back(m);
  }
  ws.r = system.responses();
  return ws;
}

Eigen::VectorXd unscaled_beta(const Workspace& ws) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(ws.b.size());
  for (Eigen::Index m = 0; m < ws.b.size(); ++m) {
    if (ws.scale[m] > 0.0) beta[m] = ws.b[m] / ws.scale[m];
  }
  return beta;
}

// Fit the unpenalized coordinates alone so lambda_max (and the adaptive
// pilot) see the residual the path actually starts from.
void prefit_free_coords(Workspace& ws, const PenaltySpec& penalty) {
  if (ws.free_coords.empty()) return;
  const PenaltySpec free_only = penalty.with_lambda(0.0);
  for (int s = 0; s < 1000; ++s) {
    if (sweep(ws, ws.free_coords, free_only) < ws.options.tolerance) break;
  }
}

double max_penalized_correlation(const Workspace& ws) {
  double base_z = 0.0;
  for (int m : ws.all_coords) {
    if (!ws.penalized[static_cast<std::size_t>(m)]) continue;
    base_z = std::max(base_z, std::fabs(ws.system->column_dot(m, ws.r) / ws.scale[m]));
  }
  return base_z;
}

// Default adaptive-LASSO weights 1/(|standardized ridge pilot| + 1e-6).
Eigen::VectorXd adaptive_weights_from_pilot(const WhitenedSystem& system,
                                            const PenaltySpec& penalty,
                                            const PathOptions& options) {
  Workspace ws = make_workspace(system, penalty, options);
  prefit_free_coords(ws, penalty);
  const double base_z = max_penalized_correlation(ws);
  if (!(base_z > 0.0)) throw NoSignal("adaptive lasso: no signal for the ridge pilot");
  const Eigen::VectorXd pilot = fit_ridge(system, 1e-3 * base_z);
  Eigen::VectorXd weights = Eigen::VectorXd::Ones(system.n_coefficients());
  for (int m : ws.all_coords) {
    if (!ws.penalized[static_cast<std::size_t>(m)]) continue;
    weights[m] = 1.0 / (std::fabs(pilot[m] * ws.scale[m]) + 1e-6);
  }
  return weights;
}

}  // namespace

const CoefficientVector& PathResult::selected_coefficients() const {
  if (!selected_index) throw InvalidInput("path: no lambda has been selected");
  return coefficients[static_cast<std::size_t>(*selected_index)];
}

PathResult fit_penalized(const WhitenedSystem& system, const PenaltySpec& penalty,
                         const std::vector<double>& lambda_grid,
                         const PathOptions& options) {
  PenaltySpec spec = penalty;
  spec.validate();
  Workspace ws = make_workspace(system, spec, options);

  // lambda_max is computed on the residual left by the unpenalized
  // coordinates, so the top of the grid really is the all-zero penalized fit.
  prefit_free_coords(ws, spec);

  if (spec.family == PenaltySpec::Family::adaptive_lasso &&
      spec.adaptive_weights.size() == 0) {
    spec.adaptive_weights = adaptive_weights_from_pilot(system, spec, options);
    spec.validate();
  }
  if (spec.family == PenaltySpec::Family::adaptive_lasso) {
    if (spec.adaptive_weights.size() != system.n_coefficients()) {
      throw InvalidInput("adaptive lasso: weight vector length mismatch");
    }
    ws.weights = spec.adaptive_weights;
  }

  std::vector<double> grid = lambda_grid;
  if (grid.empty()) {
    const bool any_penalized =
        std::find(ws.penalized.begin(), ws.penalized.end(), true) != ws.penalized.end();
    if (!any_penalized) {
      throw InvalidInput("fit_penalized: no penalized coordinates to build a grid for");
    }
    if (ws.all_coords.size() == ws.free_coords.size()) {
      throw NoSignal("fit_penalized: every penalized column is constant");
    }
    double lambda_max = 0.0;
    for (int m : ws.all_coords) {
      if (!ws.penalized[static_cast<std::size_t>(m)]) continue;
      const double z = std::fabs(ws.system->column_dot(m, ws.r) / ws.scale[m]);
      double threshold_scale = 1.0;
      if (spec.family == PenaltySpec::Family::elastic_net) threshold_scale = spec.alpha;
      if (spec.family == PenaltySpec::Family::adaptive_lasso) {
        threshold_scale = ws.weights[m];
        if (threshold_scale <= 0.0) continue;  // weight 0: never thresholded away
      }
      lambda_max = std::max(lambda_max, z / threshold_scale);
    }
    if (!(lambda_max > 0.0)) {
      throw NoSignal("fit_penalized: residual is orthogonal to every penalized column");
    }
    lambda_max *= 1.0 + 1e-12;
    grid.reserve(static_cast<std::size_t>(options.grid_size));
    const double ratio = options.lambda_min_ratio;
    for (int j = 0; j < options.grid_size; ++j) {
      const double t = options.grid_size == 1
                           ? 0.0
                           : static_cast<double>(j) / (options.grid_size - 1);
      grid.push_back(lambda_max * std::pow(ratio, t));
    }
  } else {
    // Warm starts rely on the grid walking from strong to weak shrinkage.
    for (std::size_t j = 0; j < grid.size(); ++j) {
      if (!std::isfinite(grid[j]) || grid[j] <= 0.0) {
        throw InvalidInput("fit_penalized: lambda grid entries must be finite and > 0");
      }
      if (j > 0 && grid[j] >= grid[j - 1]) {
        throw InvalidInput("fit_penalized: lambda grid must be strictly decreasing");
      }
    }
  }

  PathResult result;
  result.lambdas = grid;
  result.coefficients.reserve(grid.size());
  result.support_sizes.reserve(grid.size());
  for (double lam : grid) {
    solve_at(ws, spec.with_lambda(lam));  // warm-started from the previous lambda
    result.coefficients.emplace_back(unscaled_beta(ws), system.n_ratios(),
                                     system.n_covariates());
    int support = 0;
    for (int m : ws.all_coords) {
      if (ws.penalized[static_cast<std::size_t>(m)] && ws.b[m] != 0.0) ++support;
    }
    result.support_sizes.push_back(support);
  }
  return result;
}

PathResult cross_validate(std::span<const CompositionSample> samples,
                          std::span<const CovariateRecord> covariates,
                          const WorkingCovariance& working,
                          const PenaltySpec& penalty, int folds, std::uint64_t seed,
                          const CrossValidationOptions& options) {
  if (folds < 2) throw InvalidInput("cross_validate: needs at least 2 folds");
  const WhitenedSystem full = assemble_system(samples, covariates, working);
  const int n_used = full.n_subjects_used();
  if (n_used < folds) {
    throw InvalidInput("cross_validate: " + std::to_string(n_used) +
                       " eligible subjects for " + std::to_string(folds) + " folds");
  }

  PathResult result = fit_penalized(full, penalty, {}, options.path);

  // Adaptive weights must be shared across folds, or the folds optimize
  // different objectives; reuse the full-data pilot.
  PenaltySpec fold_penalty = penalty;
  if (penalty.family == PenaltySpec::Family::adaptive_lasso &&
      fold_penalty.adaptive_weights.size() == 0) {
    fold_penalty.adaptive_weights =
        adaptive_weights_from_pilot(full, fold_penalty, options.path);
  }

  std::vector<int> order(static_cast<std::size_t>(n_used));
  for (int i = 0; i < n_used; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(order);

  const std::size_t n_lambda = result.lambdas.size();
  std::vector<std::vector<double>> fold_mse(static_cast<std::size_t>(folds),
                                            std::vector<double>(n_lambda, 0.0));
  for (int f = 0; f < folds; ++f) {
    std::vector<int> test_ids, train_ids;
    for (int i = 0; i < n_used; ++i) {
      (i % folds == f ? test_ids : train_ids).push_back(order[static_cast<std::size_t>(i)]);
    }
    const WhitenedSystem train = full.subset(train_ids);
    const WhitenedSystem test = full.subset(test_ids);
    const PathResult fold_path =
        fit_penalized(train, fold_penalty, result.lambdas, options.path);
    for (std::size_t j = 0; j < n_lambda; ++j) {
      const Eigen::VectorXd residual =
          test.responses() - test.apply(fold_path.coefficients[j].beta);
      fold_mse[static_cast<std::size_t>(f)][j] =
          residual.squaredNorm() / static_cast<double>(test.n_rows());
    }
  }

  result.cv_mse_mean.assign(n_lambda, 0.0);
  result.cv_mse_se.assign(n_lambda, 0.0);
  for (std::size_t j = 0; j < n_lambda; ++j) {
    double mean = 0.0;
    for (int f = 0; f < folds; ++f) mean += fold_mse[static_cast<std::size_t>(f)][j];
    mean /= folds;
    double var = 0.0;
    for (int f = 0; f < folds; ++f) {
      const double d = fold_mse[static_cast<std::size_t>(f)][j] - mean;
      var += d * d;
    }
    var /= (folds - 1);
    result.cv_mse_mean[j] = mean;
    result.cv_mse_se[j] = std::sqrt(var / folds);
  }

  // Smallest lambda attaining the minimum (grid is descending, so <= keeps
  // scanning forward onto smaller lambdas among exact ties).
  std::size_t best = 0;
  for (std::size_t j = 1; j < n_lambda; ++j) {
    if (result.cv_mse_mean[j] <= result.cv_mse_mean[best]) best = j;
  }
  if (options.one_se_rule) {
    const double cutoff = result.cv_mse_mean[best] + result.cv_mse_se[best];
    for (std::size_t j = 0; j < n_lambda; ++j) {
      if (result.cv_mse_mean[j] <= cutoff) {
        best = j;  // largest lambda within one SE of the minimum
        break;
      }
    }
  }
  result.selected_index = static_cast<int>(best);
  result.lambda_selected = result.lambdas[best];
  return result;
}

std::vector<SupportEntry> selected_support(const PathResult& path, double threshold) {
  const CoefficientVector& beta = path.selected_coefficients();
  std::vector<SupportEntry> support;
  for (int k = 1; k <= beta.n_ratios; ++k) {
    for (int q = 1; q <= beta.n_covariates; ++q) {
      const double value = beta.entry(k, q);
      if (std::fabs(value) > threshold) {
        support.push_back({k, q, value > 0.0 ? 1 : -1});
      }
    }
  }
  return support;
}

}  // namespace mziln
