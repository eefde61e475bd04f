// Acceptance gate: one self-contained check per shipped claim, each printing
// a single [PASS]/[FAIL] line. Run with no arguments for the full gate or
// with criterion numbers (1-10) to run a subset.

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mziln/commands.hpp"
#include "mziln/composition.hpp"
#include "mziln/density.hpp"
#include "mziln/errors.hpp"
#include "mziln/mle.hpp"
#include "mziln/ols.hpp"
#include "mziln/path.hpp"
#include "mziln/penalty.hpp"
#include "mziln/rng.hpp"
#include "mziln/simulate.hpp"
#include "mziln/stats.hpp"
#include "mziln/system.hpp"
#include "mziln/table_io.hpp"

namespace {

using namespace mziln;

std::string fmt(double value) { return format_human(value); }

// ---------------------------------------------------------------------------
// Criterion 1: Table 1 reproduction (scaled). 100 replicates of the paper's
// low-dimensional setting (N=1000, 20 taxa, beta00=-0.1, beta10=0.8,
// exchangeable SD=1, rho=0.3, presence 0.5); average bias of both
// coefficient rows within 0.01 and coverage within [91, 98] for all four
// rows.
// ---------------------------------------------------------------------------
bool criterion_1(std::string& detail) {
  ScenarioConfig config;
  config.n_subjects = 1000;
  config.n_taxa = 20;
  config.n_covariates = 1;
  config.intercept_value = -0.1;
  config.slope_value = 0.8;
  config.outcome_sd = 1.0;
  config.outcome_rho = 0.3;
  config.outcome_shape = CovarianceShape::exchangeable;
  config.presence_probability = 0.5;
  config.n_replicates = 100;
  config.seed = 110;
  config.n_threads = 1;

  MetricReport report = run_lowdim_scenario(config);
  std::ostringstream out;
  bool ok = report.n_failed_replicates == 0;
  out << (ok ? "" : "failed replicates; ");
  for (const GroupStat& group : report.groups) {
    const bool coefficient_row =
        group.name == "beta_00" || group.name == "beta_10";
    if (coefficient_row && std::fabs(group.ave_bias) > 0.01) ok = false;
    if (group.ave_cp < 91.0 || group.ave_cp > 98.0) ok = false;
    out << group.name << " bias " << fmt(group.ave_bias) << " cp "
        << fmt(group.ave_cp) << "; ";
  }
  detail = out.str();
  return ok;
}

// ---------------------------------------------------------------------------
// Criterion 2: the least-squares fit zeroes the estimating equation on 50
// random well-posed systems.
// ---------------------------------------------------------------------------
bool criterion_2(std::string& detail) {
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng = Rng::substream(210, static_cast<std::uint64_t>(trial));
    const int n = static_cast<int>(rng.uniform_int(20, 60));
    const int n_taxa = static_cast<int>(rng.uniform_int(3, 8));
    const int k_dim = n_taxa - 1;
    const int q = static_cast<int>(rng.uniform_int(1, 4));
    const double presence = rng.uniform(0.6, 1.0);

    Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(k_dim, q + 1);
    for (int r = 0; r < k_dim; ++r)
      for (int c = 0; c <= q; ++c) beta(r, c) = rng.normal();
    const Eigen::MatrixXd sigma =
        gen_outcome_covariance(k_dim, 1.0, 0.4, CovarianceShape::ar1);
    const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(sigma).matrixL();
    PresenceDraw draw = gen_presence(n, n_taxa, presence, rng);

    std::vector<CompositionSample> samples;
    std::vector<CovariateRecord> covariates;
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd x(q);
      for (int c = 0; c < q; ++c) x[c] = rng.normal();
      Eigen::VectorXd mu = beta.col(0);
      for (int c = 0; c < q; ++c) mu += beta.col(c + 1) * x[c];
      samples.push_back(
          gen_mziln_sample(mu, chol, draw.rows[static_cast<std::size_t>(i)], rng));
      covariates.push_back({x, std::to_string(i)});
    }

    const WorkingCovariance working =
        trial % 2 == 0 ? WorkingCovariance::identity()
                       : WorkingCovariance::exchangeable(rng.uniform(0.5, 2.0),
                                                         rng.uniform(0.0, 0.6));
    WhitenedSystem system = assemble_system(samples, covariates, working);
    const OlsFit fit = fit_ols(system);
    const double residual =
        estimating_equation_residual(system, fit.beta).lpNorm<Eigen::Infinity>();
    const double scale =
        1.0 + system.apply_transpose(system.responses()).lpNorm<Eigen::Infinity>();
    worst = std::max(worst, residual / scale);
  }
  detail = "max |EE|_inf / (1+|X'U|_inf) = " + fmt(worst);
  return worst <= 1e-8;
}

// ---------------------------------------------------------------------------
// Criterion 3: coordinate descent against exhaustive grid search on tiny
// problems (M <= 3, R = 20), and the univariate update against a 1-D grid
// oracle, for every penalty family.
// ---------------------------------------------------------------------------
double penalized_value(const Eigen::MatrixXd& x, const Eigen::VectorXd& u,
                       const PenaltySpec& penalty, const Eigen::VectorXd& b) {
  double value = 0.5 * (u - x * b).squaredNorm();
  for (Eigen::Index m = 0; m < b.size(); ++m) {
    const double weight = penalty.adaptive_weights.size() > 0
                              ? penalty.adaptive_weights[m]
                              : 1.0;
    value += penalty.penalty_value(b[m], weight);
  }
  return value;
}

Eigen::VectorXd exhaustive_minimum(const Eigen::MatrixXd& x,
                                   const Eigen::VectorXd& u,
                                   const PenaltySpec& penalty, double radius) {
  const int m_dim = static_cast<int>(x.cols());
  Eigen::VectorXd best = Eigen::VectorXd::Zero(m_dim);
  double best_value = penalized_value(x, u, penalty, best);
  const int points = 17;  // odd, so the current center stays on the grid
  for (int level = 0; level < 5; ++level) {
    const double step = 2.0 * radius / (points - 1);
    const Eigen::VectorXd center = best;
    std::vector<int> idx(static_cast<std::size_t>(m_dim), 0);
    const long total = static_cast<long>(std::pow(points, m_dim));
    Eigen::VectorXd probe(m_dim);
    for (long it = 0; it < total; ++it) {
      long rest = it;
      for (int m = 0; m < m_dim; ++m) {
        idx[static_cast<std::size_t>(m)] = static_cast<int>(rest % points);
        rest /= points;
      }
      for (int m = 0; m < m_dim; ++m)
        probe[m] = center[m] + (idx[static_cast<std::size_t>(m)] -
                                (points - 1) / 2) *
                                   step;
      const double value = penalized_value(x, u, penalty, probe);
      if (value < best_value) {
        best_value = value;
        best = probe;
      }
    }
    radius = step;  // zoom into the winning cell
  }
  return best;
}

double oracle_threshold(double z, double norm, const PenaltySpec& penalty) {
  // 1-D grid minimization of 0.5*norm*(b - z/norm)^2 + pen(|b|); the
  // minimizer shares the sign of z and lies in [0, |z|/norm].
  const double sign = z < 0.0 ? -1.0 : 1.0;
  const double hi = std::fabs(z) / norm;
  auto value = [&](double b) {
    return 0.5 * norm * (b - hi) * (b - hi) + penalty.penalty_value(b);
  };
  double best = 0.0, best_value = value(0.0);
  const int coarse = 4000;
  for (int i = 1; i <= coarse; ++i) {
    const double b = hi * i / coarse;
    const double v = value(b);
    if (v < best_value) {
      best_value = v;
      best = b;
    }
  }
  const double width = hi / coarse;
  for (int i = -400; i <= 400; ++i) {
    const double b = best + width * i / 400.0;
    if (b < 0.0 || b > hi) continue;
    const double v = value(b);
    if (v < best_value) {
      best_value = v;
      best = b;
    }
  }
  return sign * best;
}

PenaltySpec family_spec(PenaltySpec::Family family, double lambda, int m_dim,
                        Rng& rng) {
  switch (family) {
    case PenaltySpec::Family::lasso:
      return PenaltySpec::lasso(lambda);
    case PenaltySpec::Family::adaptive_lasso: {
      Eigen::VectorXd weights(m_dim);
      for (int m = 0; m < m_dim; ++m) weights[m] = rng.uniform(0.5, 2.0);
      return PenaltySpec::adaptive_lasso(lambda, weights);
    }
    case PenaltySpec::Family::elastic_net:
      return PenaltySpec::elastic_net(lambda, rng.uniform(0.3, 1.0));
    case PenaltySpec::Family::scad:
      return PenaltySpec::scad(lambda);
    case PenaltySpec::Family::mcp:
      return PenaltySpec::mcp(lambda);
  }
  throw Error("unknown family");
}

bool criterion_3(std::string& detail) {
  const std::vector<PenaltySpec::Family> families = {
      PenaltySpec::Family::lasso, PenaltySpec::Family::adaptive_lasso,
      PenaltySpec::Family::elastic_net, PenaltySpec::Family::scad,
      PenaltySpec::Family::mcp};

  double worst_solver = 0.0;
  double worst_univariate = 0.0;
  std::uint64_t stream = 0;
  for (PenaltySpec::Family family : families) {
    for (int trial = 0; trial < 200; ++trial) {
      Rng rng = Rng::substream(310, stream++);
      const int n = 20;
      const int q = static_cast<int>(rng.uniform_int(1, 2));
      const double sigma = rng.uniform(0.3, 1.0);
      Eigen::VectorXd truth(q + 1);
      for (int m = 0; m <= q; ++m) truth[m] = 1.5 * rng.normal();

      std::vector<CompositionSample> samples;
      std::vector<CovariateRecord> covariates;
      for (int i = 0; i < n; ++i) {
        Eigen::VectorXd x(q);
        for (int c = 0; c < q; ++c) x[c] = rng.normal();
        double mu = truth[0];
        for (int c = 0; c < q; ++c) mu += truth[c + 1] * x[c];
        Eigen::VectorXd u(1);
        u[0] = mu + sigma * rng.normal();
        samples.push_back(inverse_log_ratio(u));
        covariates.push_back({x, std::to_string(i)});
      }
      WhitenedSystem system =
          assemble_system(samples, covariates, WorkingCovariance::identity());
      const double z_max =
          system.apply_transpose(system.responses()).lpNorm<Eigen::Infinity>();
      const double lambda = rng.uniform(0.05, 0.7) * z_max;
      PenaltySpec penalty =
          family_spec(family, lambda, system.n_coefficients(), rng);
      penalty.penalize_intercepts = true;

      std::vector<double> grid;
      const double top = 1.05 * z_max;
      for (int t = 0; t < 12; ++t)
        grid.push_back(top * std::pow(lambda / top, t / 11.0));
      PathOptions options;
      options.standardize = false;
      PathResult path = fit_penalized(system, penalty, grid, options);
      const Eigen::VectorXd solved = path.coefficients.back().beta;

      const Eigen::MatrixXd x_dense = system.dense();
      const Eigen::VectorXd u_vec = system.responses();
      const double radius =
          std::max(2.0, 1.5 * solved.lpNorm<Eigen::Infinity>());
      const Eigen::VectorXd brute =
          exhaustive_minimum(x_dense, u_vec, penalty, radius);
      worst_solver = std::max(
          worst_solver, (solved - brute).lpNorm<Eigen::Infinity>());
    }

    for (int draw = 0; draw < 10000; ++draw) {
      Rng rng = Rng::substream(311, stream++);
      const double z = 3.0 * rng.normal();
      const double norm = rng.uniform(0.2, 5.0);
      const double lambda = rng.uniform(0.0, 3.0);
      PenaltySpec penalty = family_spec(family, lambda, 1, rng);
      if (penalty.adaptive_weights.size() > 0)
        penalty.adaptive_weights.setOnes();
      const double fast = univariate_threshold(z, norm, penalty);
      const double slow = oracle_threshold(z, norm, penalty);
      worst_univariate =
          std::max(worst_univariate, std::fabs(fast - slow));
    }
  }
  detail = "max solver gap " + fmt(worst_solver) + ", max univariate gap " +
           fmt(worst_univariate);
  return worst_solver <= 0.02 && worst_univariate <= 1e-3;
}

// ---------------------------------------------------------------------------
// Criterion 4: the closed-form identity-covariance whitening root equals the
// eigendecomposition square root of (A A')^{-1} over random presence
// patterns up to L = 30.
// ---------------------------------------------------------------------------
bool criterion_4(std::string& detail) {
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    Rng rng = Rng::substream(410, static_cast<std::uint64_t>(trial));
    const int n_taxa = static_cast<int>(rng.uniform_int(3, 30));
    const double p = rng.uniform(0.3, 0.9);
    Eigen::VectorXd values = Eigen::VectorXd::Zero(n_taxa);
    int n_present = 0;
    while (n_present < 2) {
      n_present = 0;
      for (int k = 0; k < n_taxa; ++k) {
        values[k] = rng.bernoulli(p) ? rng.uniform(0.1, 1.0) : 0.0;
        if (values[k] > 0.0) ++n_present;
      }
      if (trial % 2 == 0) values[n_taxa - 1] = 0.0;  // force the absent-reference branch
      n_present = (values.array() > 0.0).count();
    }
    values /= values.sum();
    auto [transform, u] = log_ratio_transform(CompositionSample::from_values(values));
    (void)u;

    const Eigen::MatrixXd a = transform.dense_matrix();
    const Eigen::MatrixXd omega =
        (a * a.transpose()).llt().solve(Eigen::MatrixXd::Identity(
            transform.order() - 1, transform.order() - 1));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigen(omega);
    const Eigen::MatrixXd root_eigen =
        eigen.eigenvectors() *
        eigen.eigenvalues().array().sqrt().matrix().asDiagonal() *
        eigen.eigenvectors().transpose();
    const Eigen::MatrixXd root_closed = identity_whitening_root(
        transform.order(), !transform.reference_is_last());
    worst = std::max(worst,
                     (root_eigen - root_closed).cwiseAbs().maxCoeff());
  }
  detail = "max |closed - eigen| = " + fmt(worst);
  return worst <= 1e-10;
}

// ---------------------------------------------------------------------------
// Criterion 5: distributional fidelity at K+1=3. The density integrates to
// one (importance-sampled over the log-ratio coordinates of every
// multi-taxon pattern, single-taxon patterns contribute their mass exactly)
// and each subcomposition log-ratio margin passes a KS test against
// N(A mu, A Sigma A').
// ---------------------------------------------------------------------------
CompositionSample sample_from_pattern(const std::vector<bool>& pattern,
                                      const Eigen::VectorXd& u) {
  std::vector<int> nonzero;
  for (std::size_t k = 0; k < pattern.size(); ++k)
    if (pattern[k]) nonzero.push_back(static_cast<int>(k));
  double denom = 1.0;
  for (Eigen::Index l = 0; l < u.size(); ++l) denom += std::exp(u[l]);
  Eigen::VectorXd values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(pattern.size()));
  for (Eigen::Index l = 0; l < u.size(); ++l)
    values[nonzero[static_cast<std::size_t>(l)]] = std::exp(u[l]) / denom;
  values[nonzero.back()] = 1.0 / denom;
  return CompositionSample::from_values(values);
}

bool criterion_5(std::string& detail) {
  MzilnParams params;
  params.mean = Eigen::Vector2d(0.1, -0.2);
  params.covariance = Eigen::Matrix2d();
  params.covariance << 1.0, 0.3, 0.3, 0.8;
  params.discrete_masses = {{{true, false, false}, 0.05},
                            {{false, true, false}, 0.05},
                            {{false, false, true}, 0.05},
                            {{true, true, false}, 0.15},
                            {{true, false, true}, 0.15},
                            {{false, true, true}, 0.15},
                            {{true, true, true}, 0.40}};
  params.validate();

  const std::vector<std::vector<bool>> continuous = {{true, true, false},
                                                     {true, false, true},
                                                     {false, true, true},
                                                     {true, true, true}};
  double total = 0.15;  // the three single-taxon masses integrate exactly
  Rng rng(510);
  for (const auto& pattern : continuous) {
    auto [transform, u0] =
        log_ratio_transform(sample_from_pattern(pattern, Eigen::VectorXd::Zero(
            std::count(pattern.begin(), pattern.end(), true) - 1)));
    (void)u0;
    const int dim = transform.order() - 1;
    const Eigen::VectorXd proposal_mean = transform.apply(params.mean);
    const Eigen::MatrixXd sigma_sub = transform.conjugate(params.covariance);
    const Eigen::MatrixXd proposal_cov = 2.0 * sigma_sub;
    const Eigen::MatrixXd chol =
        Eigen::LLT<Eigen::MatrixXd>(proposal_cov).matrixL();
    const Eigen::MatrixXd precision = proposal_cov.llt().solve(
        Eigen::MatrixXd::Identity(dim, dim));
    const double log_norm =
        -0.5 * (dim * std::log(2.0 * M_PI) +
                std::log(proposal_cov.determinant()));

    const int n_draws = 250000;
    double sum = 0.0;
    Eigen::VectorXd z(dim), u(dim);
    for (int i = 0; i < n_draws; ++i) {
      for (int d = 0; d < dim; ++d) z[d] = rng.normal();
      u = proposal_mean + chol * z;
      const double log_q =
          log_norm - 0.5 * ((u - proposal_mean).transpose() * precision *
                            (u - proposal_mean))(0);
      const double log_density =
          mziln_log_density(sample_from_pattern(pattern, u), params);
      sum += std::exp(log_density - log_q);
    }
    total += sum / n_draws;
  }

  // Per-margin KS of the observed subcomposition log-ratios.
  const Eigen::MatrixXd chol_full =
      Eigen::LLT<Eigen::MatrixXd>(params.covariance).matrixL();
  double min_p = 1.0;
  for (const auto& pattern : continuous) {
    const int n = 10000;
    std::vector<std::vector<double>> margins;
    SubcompositionTransform transform;
    Eigen::Vector2d z;
    for (int i = 0; i < n; ++i) {
      z << rng.normal(), rng.normal();
      const Eigen::VectorXd u_full = params.mean + chol_full * z;
      CompositionSample observed = compose_observed(u_full, pattern);
      auto [t, u_obs] = log_ratio_transform(observed);
      transform = t;
      if (margins.empty())
        margins.resize(static_cast<std::size_t>(u_obs.size()));
      for (Eigen::Index l = 0; l < u_obs.size(); ++l)
        margins[static_cast<std::size_t>(l)].push_back(u_obs[l]);
    }
    const Eigen::VectorXd mean_sub = transform.apply(params.mean);
    const Eigen::MatrixXd sigma_sub = transform.conjugate(params.covariance);
    for (std::size_t l = 0; l < margins.size(); ++l) {
      const double d = stats::ks_statistic_normal(
          margins[l], mean_sub[static_cast<Eigen::Index>(l)],
          std::sqrt(sigma_sub(static_cast<Eigen::Index>(l),
                              static_cast<Eigen::Index>(l))));
      min_p = std::min(min_p, stats::kolmogorov_smirnov_p(d, margins[l].size()));
    }
  }

  detail = "MC normalization " + fmt(total) + ", min margin KS p " + fmt(min_p);
  return std::fabs(total - 1.0) <= 0.01 && min_p > 0.01;
}

// ---------------------------------------------------------------------------
// Criteria 6-8 share the desk-scale high-dimensional grid.
// ---------------------------------------------------------------------------
ScenarioConfig desk_scale_base() {
  ScenarioConfig config;
  config.n_subjects = 100;
  config.n_taxa = 50;
  config.n_covariates = 10;
  config.covariate_rho = 0.5;
  config.outcome_rho = 0.5;
  config.outcome_shape = CovarianceShape::ar1;
  config.snr = 4.5;
  config.presence_probability = 0.54;
  config.n_active_covariates = 3;
  config.taxa_per_active_covariate = 5;
  config.beta_low = 1.0;
  config.beta_high = 3.0;
  config.penalty_family = PenaltySpec::Family::mcp;
  config.cv_folds = 10;
  config.path.grid_size = 50;
  config.path.lambda_min_ratio = 0.05;
  config.n_replicates = 20;
  config.n_threads = 1;
  return config;
}

MetricReport run_cell(ScenarioConfig config, std::uint64_t seed) {
  config.seed = seed;
  return run_highdim_scenario(config);
}

bool criterion_6(std::string& detail) {
  ScenarioConfig base = desk_scale_base();
  std::ostringstream out;
  bool ok = true;

  // (a) recall non-decreasing in SNR, >= 0.8 at the top.
  std::vector<double> snr_recall;
  for (double snr : {1.5, 4.5, 7.5}) {
    ScenarioConfig config = base;
    config.snr = snr;
    MetricReport report = run_cell(config, 610 + static_cast<std::uint64_t>(snr * 10));
    if (report.n_failed_replicates > 0) ok = false;
    snr_recall.push_back(report.model.recall_mean);
  }
  out << "recall vs snr " << fmt(snr_recall[0]) << "/" << fmt(snr_recall[1])
      << "/" << fmt(snr_recall[2]);
  if (!(snr_recall[0] <= snr_recall[1] && snr_recall[1] <= snr_recall[2]))
    ok = false;
  if (snr_recall[2] < 0.8) ok = false;

  // (b) insensitivity to the outcome correlation at SNR 4.5.
  std::vector<double> rho_recall = {snr_recall[1]};  // rho = 0.5 cell reused
  for (double rho : {0.2, 0.8}) {
    ScenarioConfig config = base;
    config.outcome_rho = rho;
    MetricReport report = run_cell(config, 620 + static_cast<std::uint64_t>(rho * 10));
    if (report.n_failed_replicates > 0) ok = false;
    rho_recall.push_back(report.model.recall_mean);
  }
  const double rho_span =
      *std::max_element(rho_recall.begin(), rho_recall.end()) -
      *std::min_element(rho_recall.begin(), rho_recall.end());
  out << ", rho span " << fmt(rho_span);
  if (rho_span > 0.15) ok = false;

  // (c) recall >= 0.6 across presence probabilities.
  std::vector<double> presence_recall = {snr_recall[1]};  // p = 0.54 reused
  for (double p : {0.2, 0.8}) {
    ScenarioConfig config = base;
    config.presence_probability = p;
    MetricReport report = run_cell(config, 630 + static_cast<std::uint64_t>(p * 10));
    if (report.n_failed_replicates > 0) ok = false;
    presence_recall.push_back(report.model.recall_mean);
  }
  const double presence_min =
      *std::min_element(presence_recall.begin(), presence_recall.end());
  out << ", min recall over presence " << fmt(presence_min);
  if (presence_min < 0.6) ok = false;

  detail = out.str();
  return ok;
}

bool criterion_7(std::string& detail) {
  ScenarioConfig base = desk_scale_base();
  base.beta_low = 4.0;
  base.beta_high = 7.0;
  base.covariate_rho = 0.85;
  base.run_spearman = true;

  std::ostringstream out;
  bool ok = true;
  for (double snr : {1.5, 4.5, 7.5}) {
    ScenarioConfig config = base;
    config.snr = snr;
    MetricReport report = run_cell(config, 710 + static_cast<std::uint64_t>(snr * 10));
    if (report.n_failed_replicates > 0) ok = false;
    out << "snr " << fmt(snr) << ": F1 " << fmt(report.model.f1_mean) << " vs "
        << fmt(report.baseline.f1_mean) << "; ";
    if (!(report.model.f1_mean > report.baseline.f1_mean)) ok = false;
  }
  detail = out.str();
  return ok;
}

bool criterion_8(std::string& detail) {
  ScenarioConfig base = desk_scale_base();
  std::vector<double> recall;
  bool ok = true;
  std::ostringstream out;
  for (double gamma : {0.0, 0.5, 1.0}) {
    ScenarioConfig config = base;
    config.misspec_gamma = gamma;
    MetricReport report = run_cell(config, 810 + static_cast<std::uint64_t>(gamma * 10));
    if (report.n_failed_replicates > 0) ok = false;
    recall.push_back(report.model.recall_mean);
    out << "gamma " << fmt(gamma) << ": recall " << fmt(report.model.recall_mean)
        << "; ";
  }
  if (std::fabs(recall.back() - recall.front()) > 0.2) ok = false;
  detail = out.str();
  return ok;
}

// ---------------------------------------------------------------------------
// Criterion 9: the Spearman baseline stays quiet on permuted data (400 tests
// per seed, q = 0.05, at most 2 selections on average over 100 seeds).
// ---------------------------------------------------------------------------
bool criterion_9(std::string& detail) {
  long selected_total = 0;
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng = Rng::substream(910, static_cast<std::uint64_t>(seed));
    const int n = 100, n_taxa = 40, q = 10;
    const int k_dim = n_taxa - 1;
    const Eigen::MatrixXd x = gen_covariates(n, q, 0.5, rng);
    SparseBeta planted = gen_sparse_beta(k_dim, q, 3, 5, 1.0, 3.0, rng);

    Eigen::MatrixXd mus(n, k_dim);
    for (int i = 0; i < n; ++i)
      for (int k = 1; k <= k_dim; ++k) {
        double mu = planted.beta.entry(k, 0);
        for (int c = 1; c <= q; ++c)
          mu += planted.beta.entry(k, c) * x(i, c - 1);
        mus(i, k - 1) = mu;
      }
    const double sigma = calibrate_sigma(4.5, mus);
    const Eigen::MatrixXd chol =
        Eigen::LLT<Eigen::MatrixXd>(
            gen_outcome_covariance(k_dim, sigma, 0.5, CovarianceShape::ar1))
            .matrixL();
    PresenceDraw draw = gen_presence(n, n_taxa, 0.54, rng);

    std::vector<CompositionSample> samples;
    for (int i = 0; i < n; ++i)
      samples.push_back(gen_mziln_sample(mus.row(i).transpose(), chol,
                                         draw.rows[static_cast<std::size_t>(i)],
                                         rng));

    // Permute the covariate rows so every association is broken.
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    rng.shuffle(order);
    std::vector<CovariateRecord> permuted;
    for (int i = 0; i < n; ++i)
      permuted.push_back(
          {x.row(order[static_cast<std::size_t>(i)]).transpose(),
           std::to_string(i)});

    selected_total +=
        static_cast<long>(spearman_baseline(samples, permuted, 0.05).size());
  }
  const double mean_selected = static_cast<double>(selected_total) / 100.0;
  detail = "mean selections " + fmt(mean_selected) + " of 400 tests";
  return mean_selected <= 2.0;
}

// ---------------------------------------------------------------------------
// Criterion 10: cmd_simulate reruns byte-identically for a fixed seed, even
// with a threaded manifest and a sweep.
// ---------------------------------------------------------------------------
std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw Error("acceptance: cannot read " + path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

bool criterion_10(std::string& detail) {
  const auto dir =
      std::filesystem::temp_directory_path() / "mziln_acceptance_determinism";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const std::string manifest = (dir / "sweep.conf").string();
  write_text_atomic(manifest,
                    "mode = highdim\n"
                    "name = determinism\n"
                    "n_subjects = 40\n"
                    "n_taxa = 12\n"
                    "n_covariates = 4\n"
                    "n_active_covariates = 2\n"
                    "taxa_per_active_covariate = 2\n"
                    "beta_low = 2\n"
                    "beta_high = 4\n"
                    "snr = 4.5\n"
                    "presence_probability = 0.7\n"
                    "penalty = mcp\n"
                    "cv_folds = 4\n"
                    "grid_size = 12\n"
                    "n_replicates = 3\n"
                    "seed = 4242\n"
                    "n_threads = 2\n"
                    "run_spearman = true\n"
                    "sweep_field = snr\n"
                    "sweep_values = 2, 6\n");

  SimulateArgs first;
  first.manifest_path = manifest;
  first.out_dir = (dir / "run1").string();
  SimulateArgs second = first;
  second.out_dir = (dir / "run2").string();
  if (cmd_simulate(first) != kExitOk || cmd_simulate(second) != kExitOk) {
    detail = "cmd_simulate returned a nonzero exit code";
    return false;
  }
  const bool metrics_equal =
      slurp(first.out_dir + "/determinism_metrics.tsv") ==
      slurp(second.out_dir + "/determinism_metrics.tsv");
  const bool replicates_equal =
      slurp(first.out_dir + "/determinism_replicates.tsv") ==
      slurp(second.out_dir + "/determinism_replicates.tsv");
  detail = std::string("metrics ") + (metrics_equal ? "identical" : "DIFFER") +
           ", replicates " + (replicates_equal ? "identical" : "DIFFER");
  return metrics_equal && replicates_equal;
}

struct Criterion {
  int number;
  const char* label;
  bool (*run)(std::string&);
};

const Criterion kCriteria[] = {
    {1, "Table 1 reproduction (scaled)", criterion_1},
    {2, "estimating-equation zero", criterion_2},
    {3, "penalized-solver oracle", criterion_3},
    {4, "whitening closed form", criterion_4},
    {5, "distributional fidelity", criterion_5},
    {6, "Figure 1 trends (desk scale)", criterion_6},
    {7, "Figure 2 comparison (desk scale)", criterion_7},
    {8, "misspecification robustness", criterion_8},
    {9, "null calibration", criterion_9},
    {10, "determinism", criterion_10},
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> requested;
  for (int i = 1; i < argc; ++i) {
    try {
      requested.push_back(std::stoi(argv[i]));
    } catch (const std::exception&) {
      std::cerr << "usage: mziln_acceptance [criterion numbers 1-10]\n";
      return 2;
    }
  }

  bool all_ok = true;
  for (const Criterion& criterion : kCriteria) {
    if (!requested.empty() &&
        std::find(requested.begin(), requested.end(), criterion.number) ==
            requested.end())
      continue;
    const auto start = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = false;
    try {
      ok = criterion.run(detail);
    } catch (const std::exception& error) {
      detail = std::string("exception: ") + error.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << criterion.number
              << ": " << criterion.label << " (" << mziln::format_human(seconds)
              << " s) — " << detail << "\n";
    all_ok = all_ok && ok;
  }
  return all_ok ? 0 : 1;
}
