#include "mziln/mle.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mziln/errors.hpp"
#include "mziln/ols.hpp"
#include "mziln/stats.hpp"

namespace mziln {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct SubjectCache {
  SubcompositionTransform transform;
  Eigen::VectorXd u_sub;
  Eigen::VectorXd ext_x;  // (1, x')
  int index = -1;
};

struct Cache {
  std::vector<SubjectCache> subjects;
  int n_taxa = 0;
  int n_covariates = 0;
  int n_skipped = 0;
  int n_rows = 0;  // sum of (L_i - 1)
};

Cache build_cache(std::span<const CompositionSample> samples,
                  std::span<const CovariateRecord> covariates) {
  if (samples.size() != covariates.size()) {
    throw InvalidInput("fit_mle_lowdim: sample and covariate counts differ");
  }
  if (samples.empty()) throw EmptySystem("fit_mle_lowdim: no subjects");
  Cache cache;
  cache.n_taxa = static_cast<int>(samples[0].values.size());
  cache.n_covariates = static_cast<int>(covariates[0].x.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].n_present() < 2) {
      ++cache.n_skipped;
      continue;
    }
    auto [transform, u_sub] = log_ratio_transform(samples[i]);
    SubjectCache s;
    s.transform = std::move(transform);
    s.u_sub = std::move(u_sub);
    s.ext_x.resize(cache.n_covariates + 1);
    s.ext_x[0] = 1.0;
    s.ext_x.tail(cache.n_covariates) = covariates[i].x;
    s.index = static_cast<int>(i);
    cache.subjects.push_back(std::move(s));
    cache.n_rows += cache.subjects.back().transform.order() - 1;
  }
  if (cache.subjects.empty()) {
    throw EmptySystem("fit_mle_lowdim: every subject has fewer than two nonzero taxa");
  }
  return cache;
}

// Per-taxon means X_i beta as a K-vector: the stacked coefficient vector read
// as a (Q+1) x K matrix, applied to (1, x').
Eigen::VectorXd subject_means(const Eigen::VectorXd& beta, const Eigen::VectorXd& ext_x,
                              int n_ratios) {
  const Eigen::Map<const Eigen::MatrixXd> b(beta.data(), ext_x.size(), n_ratios);
  return b.transpose() * ext_x;
}

// l(beta, Sigma) over the cache, optionally with dl/dSigma (K x K).
double evaluate(const Cache& cache, const Eigen::VectorXd& beta,
                const Eigen::MatrixXd& sigma, Eigen::MatrixXd* d_sigma) {
  const int k_dim = cache.n_taxa - 1;
  if (d_sigma) d_sigma->setZero(k_dim, k_dim);
  double ll = 0.0;
  for (const SubjectCache& s : cache.subjects) {
    const Eigen::VectorXd mu = subject_means(beta, s.ext_x, k_dim);
    const Eigen::VectorXd e = s.u_sub - s.transform.apply(mu);
    const Eigen::MatrixXd proj = s.transform.conjugate(sigma);
    Eigen::LLT<Eigen::MatrixXd> llt(proj);
    if (llt.info() != Eigen::Success) {
      throw SingularCovariance("likelihood: projected covariance is not positive definite");
    }
    const Eigen::MatrixXd& l_factor = llt.matrixL();
    double log_det = 0.0;
    for (int j = 0; j < proj.rows(); ++j) log_det += 2.0 * std::log(l_factor(j, j));
    const Eigen::VectorXd alpha = llt.solve(e);
    ll += -0.5 * log_det - 0.5 * e.dot(alpha);
    if (d_sigma) {
      const Eigen::MatrixXd inv =
          llt.solve(Eigen::MatrixXd::Identity(proj.rows(), proj.rows()));
      const Eigen::MatrixXd t = alpha * alpha.transpose() - inv;
      *d_sigma += 0.5 * s.transform.conjugate_adjoint(t);
    }
  }
  return ll;
}

Eigen::MatrixXd exchangeable_sigma(int k_dim, double sd, double rho) {
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Constant(k_dim, k_dim, sd * sd * rho);
  sigma.diagonal().setConstant(sd * sd);
  return sigma;
}

struct ExchangeableStep {
  double sd;
  double rho;
  double log_lik;
};

// Maximize l over (log sd, atanh rho) by BFGS with Armijo backtracking.
ExchangeableStep update_exchangeable(const Cache& cache, const Eigen::VectorXd& beta,
                                     double sd0, double rho0) {
  const int k_dim = cache.n_taxa - 1;
  using Vec2 = Eigen::Vector2d;
  using Mat2 = Eigen::Matrix2d;

  struct Eval {
    double f = kInf;  // -l
    Vec2 g = Vec2::Zero();
  };
  Eigen::MatrixXd d_sigma;
  const auto eval_at = [&](const Vec2& theta, bool want_grad) {
    Eval out;
    const double sd = std::exp(theta[0]);
    const double rho = std::tanh(theta[1]);
    const Eigen::MatrixXd sigma = exchangeable_sigma(k_dim, sd, rho);
    try {
      out.f = -evaluate(cache, beta, sigma, want_grad ? &d_sigma : nullptr);
    } catch (const SingularCovariance&) {
      return out;  // infeasible point; treated as +inf by the line search
    }
    if (want_grad) {
      // d Sigma / d log sd = 2 Sigma; d Sigma / d rho = sd^2 (11' - I).
      const double g_log_sd = 2.0 * d_sigma.cwiseProduct(sigma).sum();
      double g_rho = sd * sd * (d_sigma.sum() - d_sigma.trace());
      g_rho *= 1.0 - rho * rho;  // chain through rho = tanh(t)
      out.g = Vec2(-g_log_sd, -g_rho);
    }
    return out;
  };

  Vec2 theta(std::log(sd0), std::atanh(std::clamp(rho0, -0.999, 0.999)));
  Eval cur = eval_at(theta, true);
  Mat2 h_inv = Mat2::Identity();
  for (int it = 0; it < 100; ++it) {
    if (cur.g.lpNorm<Eigen::Infinity>() < 1e-8 * std::max(1.0, std::fabs(cur.f))) break;
    Vec2 direction = -h_inv * cur.g;
    if (direction.dot(cur.g) >= 0.0) {  // not a descent direction: reset
      direction = -cur.g;
      h_inv = Mat2::Identity();
    }
    double step = 1.0;
    Vec2 theta_new;
    Eval next;
    bool accepted = false;
    while (step > 1e-14) {
      theta_new = theta + step * direction;
      next = eval_at(theta_new, true);
      if (next.f <= cur.f + 1e-4 * step * direction.dot(cur.g)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const Vec2 s = theta_new - theta;
    const Vec2 y = next.g - cur.g;
    const double sy = s.dot(y);
    if (sy > 1e-12) {
      const Mat2 left = Mat2::Identity() - (s * y.transpose()) / sy;
      h_inv = left * h_inv * left.transpose() + (s * s.transpose()) / sy;
    }
    const double improvement = cur.f - next.f;
    theta = theta_new;
    cur = next;
    if (improvement < 1e-12 * (1.0 + std::fabs(cur.f))) break;
  }
  return {std::exp(theta[0]), std::tanh(theta[1]), -cur.f};
}

struct UnstructuredStep {
  Eigen::MatrixXd sigma;
  double log_lik;
};

// Maximize l over SPD Sigma via gradient ascent on the log-Cholesky
// parameterization (log diagonal, free strict lower triangle).
UnstructuredStep update_unstructured(const Cache& cache, const Eigen::VectorXd& beta,
                                     const Eigen::MatrixXd& sigma0) {
  const int k_dim = cache.n_taxa - 1;
  Eigen::LLT<Eigen::MatrixXd> llt(sigma0);
  if (llt.info() != Eigen::Success) {
    throw SingularCovariance("Sigma update: starting point is not positive definite");
  }
  Eigen::MatrixXd chol = llt.matrixL();

  Eigen::MatrixXd d_sigma;
  const auto assemble = [&](const Eigen::MatrixXd& l) {
    return (l * l.transpose()).eval();
  };
  double ll = evaluate(cache, beta, assemble(chol), &d_sigma);
  double step = 1e-2;
  for (int it = 0; it < 500; ++it) {
    // dl/dL = 2 (dl/dSigma) L on the lower triangle; log-diagonal chain rule
    // multiplies diagonal entries by L_jj.
    Eigen::MatrixXd grad = 2.0 * (d_sigma * chol);
    grad = grad.triangularView<Eigen::Lower>();
    for (int j = 0; j < k_dim; ++j) grad(j, j) *= chol(j, j);
    const double grad_norm = grad.norm();
    if (grad_norm < 1e-9 * (1.0 + std::fabs(ll))) break;

    bool accepted = false;
    double ll_new = ll;
    Eigen::MatrixXd chol_new;
    while (step > 1e-14) {
      chol_new = chol;
      for (int j = 0; j < k_dim; ++j) {
        chol_new(j, j) = chol(j, j) * std::exp(step * grad(j, j));
        for (int i = j + 1; i < k_dim; ++i) chol_new(i, j) += step * grad(i, j);
      }
      try {
        ll_new = evaluate(cache, beta, assemble(chol_new), nullptr);
      } catch (const SingularCovariance&) {
        step *= 0.5;
        continue;
      }
      if (ll_new > ll) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const double improvement = ll_new - ll;
    chol = chol_new;
    ll = evaluate(cache, beta, assemble(chol), &d_sigma);
    step = std::min(step * 1.5, 1.0);
    if (improvement < 1e-10 * (1.0 + std::fabs(ll))) break;
  }
  Eigen::MatrixXd sigma = assemble(chol);
  sigma = 0.5 * (sigma + sigma.transpose());
  return {std::move(sigma), ll};
}

WhitenedSystem system_from_cache(const Cache& cache, const WorkingCovariance& working) {
  std::vector<WhitenedBlock> blocks;
  blocks.reserve(cache.subjects.size());
  for (const SubjectCache& s : cache.subjects) {
    CovariateRecord record;
    record.x = s.ext_x.tail(cache.n_covariates);
    WhitenedBlock blk = whiten_subject(s.transform, record, s.u_sub, working);
    blk.subject_index = s.index;
    blocks.push_back(std::move(blk));
  }
  return WhitenedSystem(std::move(blocks), cache.n_taxa - 1, cache.n_covariates,
                        cache.n_skipped);
}

// Observed information of the profile likelihood in (sd, rho) by central
// second differences; the mean/covariance blocks of the information are
// asymptotically orthogonal, so beta stays fixed at its estimate.
void exchangeable_standard_errors(const Cache& cache, const Eigen::VectorXd& beta,
                                  double sd, double rho, double* sd_se, double* rho_se) {
  const int k_dim = cache.n_taxa - 1;
  const auto lp = [&](double s, double r) {
    try {
      return evaluate(cache, beta, exchangeable_sigma(k_dim, s, r), nullptr);
    } catch (const SingularCovariance&) {
      return -kInf;
    }
  };
  const double h_sd = 1e-4 * std::max(1.0, std::fabs(sd));
  const double rho_floor = k_dim > 1 ? -1.0 / (k_dim - 1.0) : -1.0;
  double h_rho = 1e-4 * std::max(1.0, std::fabs(rho));
  h_rho = std::min(h_rho, 0.25 * std::min(1.0 - rho, rho - rho_floor));
  *sd_se = *rho_se = std::numeric_limits<double>::quiet_NaN();
  if (!(h_rho > 0.0)) return;

  const double f0 = lp(sd, rho);
  const double h11 = (lp(sd + h_sd, rho) - 2.0 * f0 + lp(sd - h_sd, rho)) / (h_sd * h_sd);
  const double h22 = (lp(sd, rho + h_rho) - 2.0 * f0 + lp(sd, rho - h_rho)) / (h_rho * h_rho);
  const double h12 = (lp(sd + h_sd, rho + h_rho) - lp(sd + h_sd, rho - h_rho) -
                      lp(sd - h_sd, rho + h_rho) + lp(sd - h_sd, rho - h_rho)) /
                     (4.0 * h_sd * h_rho);
  // Information = -Hessian; invert the 2x2 if positive definite.
  const double a = -h11, b = -h12, c = -h22;
  const double det = a * c - b * b;
  if (!(a > 0.0) || !(det > 0.0)) return;
  *sd_se = std::sqrt(c / det);
  *rho_se = std::sqrt(a / det);
}

}  // namespace

MleFit fit_mle_lowdim(std::span<const CompositionSample> samples,
                      std::span<const CovariateRecord> covariates,
                      const MleOptions& options) {
  if (options.structure == WorkingCovariance::Kind::identity) {
    throw InvalidInput(
        "fit_mle_lowdim: structure must be exchangeable or unstructured "
        "(identity has nothing to estimate; use fit_ols)");
  }
  const Cache cache = build_cache(samples, covariates);
  const int k_dim = cache.n_taxa - 1;
  const int n = static_cast<int>(samples.size());
  const int m = k_dim * (cache.n_covariates + 1);
  if (k_dim >= n) {
    throw InvalidInput("fit_mle_lowdim: needs more subjects than taxa (K=" +
                       std::to_string(k_dim) + ", N=" + std::to_string(n) + ")");
  }
  if (m >= cache.n_rows) {
    throw InvalidInput("fit_mle_lowdim: " + std::to_string(m) +
                       " coefficients but only " + std::to_string(cache.n_rows) +
                       " stacked rows");
  }

  const bool exch = options.structure == WorkingCovariance::Kind::exchangeable;
  double sd = 1.0, rho = 0.0;
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(k_dim, k_dim);

  MleFit fit;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(m);
  double prev_ll = -kInf;
  double ll = -kInf;
  for (int outer = 0; outer < options.max_outer_iterations; ++outer) {
    fit.n_outer_iterations = outer + 1;
    const WorkingCovariance working = exch ? WorkingCovariance::exchangeable(sd, rho)
                                           : WorkingCovariance::unstructured(sigma);
    const WhitenedSystem system = system_from_cache(cache, working);
    beta = fit_ols(system).beta;
    if (exch) {
      const ExchangeableStep step = update_exchangeable(cache, beta, sd, rho);
      sd = step.sd;
      rho = step.rho;
      ll = step.log_lik;
    } else {
      UnstructuredStep step = update_unstructured(cache, beta, sigma);
      sigma = std::move(step.sigma);
      ll = step.log_lik;
    }
    if (std::fabs(ll - prev_ll) < options.tolerance * (1.0 + std::fabs(ll))) {
      fit.converged = true;
      break;
    }
    prev_ll = ll;
  }

  const WorkingCovariance fitted = exch ? WorkingCovariance::exchangeable(sd, rho)
                                        : WorkingCovariance::unstructured(sigma);
  const WhitenedSystem system = system_from_cache(cache, fitted);
  beta = fit_ols(system).beta;

  fit.beta = CoefficientVector(beta, k_dim, cache.n_covariates);
  fit.covariance = fitted;
  fit.beta_covariance = sandwich_covariance(system, beta);
  fit.log_likelihood = evaluate(cache, beta, fitted.materialize(k_dim), nullptr);
  fit.n_subjects_used = system.n_subjects_used();
  fit.n_subjects_skipped = cache.n_skipped;
  if (exch) {
    exchangeable_standard_errors(cache, beta, sd, rho, &fit.sd_se, &fit.rho_se);
  } else {
    fit.sd_se = fit.rho_se = std::numeric_limits<double>::quiet_NaN();
  }
  return fit;
}

Eigen::MatrixXd sandwich_covariance(const WhitenedSystem& system,
                                    const Eigen::VectorXd& beta) {
  const int m = system.n_coefficients();
  if (m > WhitenedSystem::kDenseCoefficientLimit) {
    throw InvalidInput("sandwich_covariance: system beyond the dense limit");
  }
  const Eigen::VectorXd fitted = system.apply(beta);
  Eigen::MatrixXd bread = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(m, m);
  const std::vector<WhitenedBlock>& blocks = system.blocks();
  for (int i = 0; i < static_cast<int>(blocks.size()); ++i) {
    const auto [first, past] = system.row_span(i);
    const Eigen::MatrixXd x = blocks[i].dense_x(system.n_ratios());
    const Eigen::VectorXd r =
        system.responses().segment(first, past - first) - fitted.segment(first, past - first);
    bread.noalias() += x.transpose() * x;
    const Eigen::VectorXd v = x.transpose() * r;
    meat.noalias() += v * v.transpose();
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(bread);
  if (ldlt.info() != Eigen::Success) {
    throw RankDeficient("sandwich_covariance: X~'X~ is not positive definite");
  }
  Eigen::MatrixXd v = ldlt.solve(meat);              // B^{-1} M
  v = ldlt.solve(v.transpose()).transpose();         // B^{-1} M B^{-1}
  return 0.5 * (v + v.transpose());
}

ConfidenceIntervals confidence_intervals(const Eigen::VectorXd& beta_hat,
                                         const Eigen::MatrixXd& covariance,
                                         double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw InvalidInput("confidence_intervals: level must lie in (0, 1)");
  }
  if (covariance.rows() != beta_hat.size() || covariance.cols() != beta_hat.size()) {
    throw InvalidInput("confidence_intervals: covariance shape mismatch");
  }
  const double z = stats::normal_quantile(0.5 * (1.0 + level));
  ConfidenceIntervals out;
  out.lower.resize(beta_hat.size());
  out.upper.resize(beta_hat.size());
  for (Eigen::Index i = 0; i < beta_hat.size(); ++i) {
    const double se = std::sqrt(std::max(0.0, covariance(i, i)));
    out.lower[i] = beta_hat[i] - z * se;
    out.upper[i] = beta_hat[i] + z * se;
  }
  return out;
}

double profile_log_likelihood(std::span<const CompositionSample> samples,
                              std::span<const CovariateRecord> covariates,
                              const CoefficientVector& beta,
                              const WorkingCovariance& working) {
  const Cache cache = build_cache(samples, covariates);
  const int k_dim = cache.n_taxa - 1;
  if (beta.n_ratios != k_dim || beta.n_covariates != cache.n_covariates) {
    throw InvalidInput("profile_log_likelihood: coefficient shape mismatch");
  }
  return evaluate(cache, beta.beta, working.materialize(k_dim), nullptr);
}

}  // namespace mziln
