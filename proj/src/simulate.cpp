#include "mziln/simulate.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <set>
#include <string>
#include <thread>
#include <utility>

#include "mziln/errors.hpp"
#include "mziln/mle.hpp"
#include "mziln/stats.hpp"

namespace mziln {
namespace {

// Deterministic regardless of thread count: slot i only ever sees body(i).
void parallel_for(int n_items, int n_threads, const std::function<void(int)>& body) {
  if (n_threads <= 1 || n_items <= 1) {
    for (int i = 0; i < n_items; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  const auto worker = [&] {
    for (int i = next.fetch_add(1); i < n_items; i = next.fetch_add(1)) body(i);
  };
  std::vector<std::thread> pool;
  const int spawn = std::min(n_threads, n_items) - 1;
  pool.reserve(static_cast<std::size_t>(spawn));
  for (int t = 0; t < spawn; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
}

Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& sigma) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw SingularCovariance("simulation: covariance is not positive definite");
  }
  return llt.matrixL();
}

// Linear predictors for all subjects: [1 X] times the coefficient blocks
// read as a (Q+1) x K matrix.
Eigen::MatrixXd linear_predictors(const Eigen::MatrixXd& x,
                                  const CoefficientVector& beta) {
  const int n = static_cast<int>(x.rows());
  const int q1 = beta.n_covariates + 1;
  Eigen::MatrixXd ext(n, q1);
  ext.col(0).setOnes();
  ext.rightCols(q1 - 1) = x;
  const Eigen::Map<const Eigen::MatrixXd> b(beta.beta.data(), q1, beta.n_ratios);
  return ext * b;  // N x K
}

PenaltySpec default_penalty(PenaltySpec::Family family) {
  switch (family) {
    case PenaltySpec::Family::lasso:
      return PenaltySpec::lasso(0.0);
    case PenaltySpec::Family::adaptive_lasso:
      return PenaltySpec::adaptive_lasso(0.0);
    case PenaltySpec::Family::elastic_net:
      return PenaltySpec::elastic_net(0.0);
    case PenaltySpec::Family::scad:
      return PenaltySpec::scad(0.0);
    case PenaltySpec::Family::mcp:
      return PenaltySpec::mcp(0.0);
  }
  return PenaltySpec::mcp(0.0);
}

void validate_common(const ScenarioConfig& c) {
  if (c.n_subjects < 1 || c.n_taxa < 2 || c.n_covariates < 0) {
    throw ConfigError("scenario: need n_subjects >= 1, n_taxa >= 2, n_covariates >= 0");
  }
  if (!(c.presence_probability > 0.0) || c.presence_probability > 1.0) {
    throw ConfigError("scenario: presence probability must lie in (0, 1]");
  }
  if (!(std::fabs(c.covariate_rho) < 1.0)) {
    throw ConfigError("scenario: |covariate_rho| must be < 1");
  }
  if (!(c.misspec_gamma >= 0.0) || c.misspec_gamma > 1.0) {
    throw ConfigError("scenario: misspec_gamma must lie in [0, 1]");
  }
  if (c.n_replicates < 1) throw ConfigError("scenario: n_replicates must be >= 1");
  if (c.reference_taxon < 0 || c.reference_taxon > c.n_taxa) {
    throw ConfigError("scenario: reference_taxon out of range");
  }
}

}  // namespace

Eigen::MatrixXd gen_covariates(int n_subjects, int n_covariates, double rho_x, Rng& rng) {
  if (n_subjects < 1 || n_covariates < 1) {
    throw InvalidInput("gen_covariates: need at least one subject and covariate");
  }
  if (!(std::fabs(rho_x) < 1.0)) throw InvalidInput("gen_covariates: |rho_x| must be < 1");
  Eigen::MatrixXd cov(n_covariates, n_covariates);
  for (int i = 0; i < n_covariates; ++i) {
    for (int j = 0; j < n_covariates; ++j) cov(i, j) = std::pow(rho_x, std::abs(i - j));
  }
  const Eigen::MatrixXd chol = cholesky_lower(cov);
  Eigen::MatrixXd x(n_subjects, n_covariates);
  Eigen::VectorXd z(n_covariates);
  for (int i = 0; i < n_subjects; ++i) {
    for (int j = 0; j < n_covariates; ++j) z[j] = rng.normal();
    x.row(i) = (chol * z).transpose();
  }
  return x;
}

SparseBeta gen_sparse_beta(int n_ratios, int n_covariates, int n_active,
                           int taxa_per_cov, double low, double high, Rng& rng) {
  if (n_active < 0 || n_active > n_covariates) {
    throw InvalidInput("gen_sparse_beta: n_active must lie in [0, Q]");
  }
  if (taxa_per_cov < 0 || taxa_per_cov > n_ratios) {
    throw InvalidInput("gen_sparse_beta: taxa_per_cov must lie in [0, K]");
  }
  if (n_active > 0 && taxa_per_cov > 0 && !(1.0 <= low && low < high)) {
    throw InvalidInput("gen_sparse_beta: need 1 <= low < high");
  }
  SparseBeta out;
  out.beta = CoefficientVector(
      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_ratios) * (n_covariates + 1)),
      n_ratios, n_covariates);
  std::vector<int> active = rng.sample_without_replacement(n_covariates, n_active);
  std::sort(active.begin(), active.end());
  for (int q0 : active) {
    const int q = q0 + 1;  // 1-based covariate
    std::vector<int> taxa = rng.sample_without_replacement(n_ratios, taxa_per_cov);
    std::sort(taxa.begin(), taxa.end());
    for (int k0 : taxa) {
      const int k = k0 + 1;  // 1-based taxon
      const double magnitude = low + (high - low) * rng.uniform();
      const double value = rng.bernoulli(0.5) ? magnitude : -magnitude;
      out.beta.set_entry(k, q, value);
      out.truth.push_back({k, q, value > 0.0 ? 1 : -1});
    }
  }
  return out;
}

Eigen::MatrixXd gen_outcome_covariance(int n_ratios, double sigma, double rho,
                                       CovarianceShape shape) {
  if (n_ratios < 1) throw InvalidInput("gen_outcome_covariance: K must be >= 1");
  if (!(sigma > 0.0)) throw InvalidInput("gen_outcome_covariance: sigma must be > 0");
  Eigen::MatrixXd out(n_ratios, n_ratios);
  const double s2 = sigma * sigma;
  if (shape == CovarianceShape::ar1) {
    if (!(std::fabs(rho) < 1.0)) {
      throw InvalidInput("gen_outcome_covariance: |rho| must be < 1 for ar1");
    }
    for (int i = 0; i < n_ratios; ++i) {
      for (int j = 0; j < n_ratios; ++j) out(i, j) = s2 * std::pow(rho, std::abs(i - j));
    }
  } else {
    const double floor = n_ratios > 1 ? -1.0 / (n_ratios - 1.0) : -1.0;
    if (!(rho > floor && rho < 1.0)) {
      throw InvalidInput("gen_outcome_covariance: exchangeable rho out of range");
    }
    out.setConstant(s2 * rho);
    out.diagonal().setConstant(s2);
  }
  return out;
}

double calibrate_sigma(double target_snr, const Eigen::MatrixXd& linear_predictors) {
  if (!(target_snr > 0.0)) throw InvalidInput("calibrate_sigma: SNR must be positive");
  if (std::isinf(target_snr)) return 0.0;
  const double n = static_cast<double>(linear_predictors.size());
  if (n < 2) throw NoSignal("calibrate_sigma: not enough predictor entries");
  const double mean = linear_predictors.sum() / n;
  const double ss = (linear_predictors.array() - mean).square().sum();
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 0.0)) throw NoSignal("calibrate_sigma: constant linear predictors");
  return sd / target_snr;
}

PresenceDraw gen_presence(int n_subjects, int n_taxa, double p, Rng& rng) {
  if (!(p > 0.0) || p > 1.0) throw InvalidInput("gen_presence: p must lie in (0, 1]");
  PresenceDraw draw;
  draw.rows.resize(static_cast<std::size_t>(n_subjects));
  for (int i = 0; i < n_subjects; ++i) {
    std::vector<bool> row(static_cast<std::size_t>(n_taxa));
    while (true) {
      bool any = false;
      for (int k = 0; k < n_taxa; ++k) {
        const bool z = rng.bernoulli(p);
        row[static_cast<std::size_t>(k)] = z;
        any = any || z;
      }
      if (any) break;
      ++draw.n_resampled;
    }
    draw.rows[static_cast<std::size_t>(i)] = std::move(row);
  }
  return draw;
}

CompositionSample compose_observed(const Eigen::VectorXd& u,
                                   const std::vector<bool>& presence) {
  const CompositionSample latent = inverse_log_ratio(u);
  if (static_cast<Eigen::Index>(presence.size()) != latent.values.size()) {
    throw InvalidInput("compose_observed: presence length mismatch");
  }
  Eigen::VectorXd values = latent.values;
  double total = 0.0;
  for (Eigen::Index k = 0; k < values.size(); ++k) {
    if (!presence[static_cast<std::size_t>(k)]) values[k] = 0.0;
    total += values[k];
  }
  if (!(total > 0.0)) throw InvalidInput("compose_observed: no taxon present");
  values /= total;
  return CompositionSample::from_values(std::move(values));
}

CompositionSample gen_mziln_sample(const Eigen::VectorXd& mu,
                                   const Eigen::MatrixXd& sigma_chol,
                                   const std::vector<bool>& presence, Rng& rng) {
  return compose_observed(gen_misspecified_u(mu, sigma_chol, 0.0, 0.0, rng), presence);
}

Eigen::VectorXd gen_misspecified_u(const Eigen::VectorXd& mu,
                                   const Eigen::MatrixXd& sigma_chol, double gamma,
                                   double sigma, Rng& rng) {
  if (!(gamma >= 0.0) || gamma > 1.0) {
    throw InvalidInput("gen_misspecified_u: gamma must lie in [0, 1]");
  }
  const Eigen::Index k = mu.size();
  Eigen::VectorXd z(k);
  for (Eigen::Index j = 0; j < k; ++j) z[j] = rng.normal();
  Eigen::VectorXd u = mu;
  if (sigma_chol.size() > 0) {
    u.noalias() += (1.0 - gamma) * (sigma_chol * z);
  }
  if (gamma > 0.0) {
    for (Eigen::Index j = 0; j < k; ++j) {
      u[j] += gamma * sigma * (rng.chi_square_1() - 1.0);
    }
  }
  return u;
}

SelectionCounts selection_metrics(std::span<const SupportEntry> selected,
                                  std::span<const SupportEntry> truth) {
  std::set<std::pair<int, int>> truth_pairs;
  for (const SupportEntry& e : truth) truth_pairs.emplace(e.taxon, e.covariate);
  std::set<std::pair<int, int>> selected_pairs;
  for (const SupportEntry& e : selected) selected_pairs.emplace(e.taxon, e.covariate);

  SelectionCounts counts;
  for (const auto& pair : selected_pairs) {
    if (truth_pairs.count(pair)) {
      ++counts.tp;
    } else {
      ++counts.fp;
    }
  }
  counts.fn = static_cast<int>(truth_pairs.size()) - counts.tp;
  counts.recall =
      (counts.tp + counts.fn) > 0
          ? static_cast<double>(counts.tp) / (counts.tp + counts.fn)
          : 1.0;  // empty truth: nothing was missed
  counts.precision = (counts.tp + counts.fp) > 0
                         ? static_cast<double>(counts.tp) / (counts.tp + counts.fp)
                         : (truth_pairs.empty() ? 1.0 : 0.0);
  counts.f1 = (counts.recall + counts.precision) > 0.0
                  ? 2.0 * counts.recall * counts.precision /
                        (counts.recall + counts.precision)
                  : 0.0;
  return counts;
}

SelectionSummary summarize_selection(std::span<const SelectionCounts> replicates) {
  SelectionSummary s;
  const int n = static_cast<int>(replicates.size());
  if (n == 0) return s;
  for (const SelectionCounts& c : replicates) {
    s.recall_mean += c.recall;
    s.precision_mean += c.precision;
    s.f1_mean += c.f1;
    s.tp += c.tp;
    s.fp += c.fp;
    s.fn += c.fn;
  }
  s.recall_mean /= n;
  s.precision_mean /= n;
  s.f1_mean /= n;
  if (n > 1) {
    double vr = 0.0, vp = 0.0, vf = 0.0;
    for (const SelectionCounts& c : replicates) {
      vr += (c.recall - s.recall_mean) * (c.recall - s.recall_mean);
      vp += (c.precision - s.precision_mean) * (c.precision - s.precision_mean);
      vf += (c.f1 - s.f1_mean) * (c.f1 - s.f1_mean);
    }
    s.recall_sd = std::sqrt(vr / (n - 1));
    s.precision_sd = std::sqrt(vp / (n - 1));
    s.f1_sd = std::sqrt(vf / (n - 1));
  }
  return s;
}

std::vector<SupportEntry> spearman_baseline(std::span<const CompositionSample> samples,
                                            std::span<const CovariateRecord> covariates,
                                            double fdr_q, int* n_skipped) {
  const int n = static_cast<int>(samples.size());
  if (n < 10) throw InvalidInput("spearman_baseline: needs at least 10 subjects");
  if (samples.size() != covariates.size()) {
    throw InvalidInput("spearman_baseline: sample and covariate counts differ");
  }
  const int n_taxa = samples[0].n_taxa();
  const int n_cov = static_cast<int>(covariates[0].x.size());

  std::vector<std::vector<double>> taxon_cols(
      static_cast<std::size_t>(n_taxa), std::vector<double>(static_cast<std::size_t>(n)));
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < n_taxa; ++t) {
      taxon_cols[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)] =
          samples[static_cast<std::size_t>(i)].values[t];
    }
  }
  std::vector<std::vector<double>> cov_cols(
      static_cast<std::size_t>(n_cov), std::vector<double>(static_cast<std::size_t>(n)));
  for (int i = 0; i < n; ++i) {
    for (int q = 0; q < n_cov; ++q) {
      cov_cols[static_cast<std::size_t>(q)][static_cast<std::size_t>(i)] =
          covariates[static_cast<std::size_t>(i)].x[q];
    }
  }
  const auto constant = [](const std::vector<double>& col) {
    const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
    return *lo == *hi;
  };

  struct Test {
    int taxon, covariate;
    double rho;
  };
  std::vector<Test> tests;
  std::vector<double> p_values;
  int skipped = 0;
  for (int t = 0; t < n_taxa; ++t) {
    const std::vector<double>& yc = taxon_cols[static_cast<std::size_t>(t)];
    const bool y_const = constant(yc);
    for (int q = 0; q < n_cov; ++q) {
      const std::vector<double>& xc = cov_cols[static_cast<std::size_t>(q)];
      if (y_const || constant(xc)) {
        ++skipped;
        continue;
      }
      const double rho = stats::spearman_rho(yc, xc);
      tests.push_back({t + 1, q + 1, rho});
      p_values.push_back(stats::spearman_p_value(rho, static_cast<std::size_t>(n)));
    }
  }
  if (n_skipped) *n_skipped = skipped;

  const std::vector<bool> reject = stats::benjamini_hochberg(p_values, fdr_q);
  std::vector<SupportEntry> selected;
  for (std::size_t i = 0; i < tests.size(); ++i) {
    if (reject[i]) {
      selected.push_back({tests[i].taxon, tests[i].covariate, tests[i].rho >= 0.0 ? 1 : -1});
    }
  }
  return selected;
}

std::vector<CompositionSample> relabel_reference(
    std::span<const CompositionSample> samples, int reference_taxon) {
  if (samples.empty()) return {};
  const int n_taxa = samples[0].n_taxa();
  if (reference_taxon < 1 || reference_taxon > n_taxa) {
    throw InvalidInput("relabel_reference: taxon index out of range");
  }
  std::vector<int> order;  // original 1-based columns in their new positions
  order.reserve(static_cast<std::size_t>(n_taxa));
  for (int t = 1; t <= n_taxa; ++t) {
    if (t != reference_taxon) order.push_back(t);
  }
  order.push_back(reference_taxon);

  std::vector<CompositionSample> out;
  out.reserve(samples.size());
  for (const CompositionSample& sample : samples) {
    Eigen::VectorXd values(n_taxa);
    for (int pos = 0; pos < n_taxa; ++pos) {
      values[pos] = sample.values[order[static_cast<std::size_t>(pos)] - 1];
    }
    out.push_back(CompositionSample::from_values(std::move(values)));
  }
  return out;
}

std::vector<SupportEntry> relabel_truth(const CoefficientVector& truth_beta,
                                        int reference_taxon) {
  const int n_taxa = truth_beta.n_ratios + 1;
  if (reference_taxon < 1 || reference_taxon > n_taxa) {
    throw InvalidInput("relabel_truth: taxon index out of range");
  }
  const int r = reference_taxon;
  const auto coefficient = [&](int t, int q) {
    return t <= truth_beta.n_ratios ? truth_beta.entry(t, q) : 0.0;
  };
  std::vector<SupportEntry> truth;
  for (int t = 1; t <= n_taxa; ++t) {
    if (t == r) continue;
    const int new_index = t < r ? t : t - 1;
    for (int q = 1; q <= truth_beta.n_covariates; ++q) {
      const double diff = coefficient(t, q) - coefficient(r, q);
      if (diff != 0.0) truth.push_back({new_index, q, diff > 0.0 ? 1 : -1});
    }
  }
  std::sort(truth.begin(), truth.end(), [](const SupportEntry& a, const SupportEntry& b) {
    return std::tie(a.taxon, a.covariate) < std::tie(b.taxon, b.covariate);
  });
  return truth;
}

MetricReport run_lowdim_scenario(const ScenarioConfig& config) {
  validate_common(config);
  if (config.n_covariates < 1) {
    throw ConfigError("low-dim scenario: needs at least one covariate");
  }
  const int n = config.n_subjects;
  const int k_dim = config.n_taxa - 1;
  const int q = config.n_covariates;
  const int q1 = q + 1;

  CoefficientVector truth(
      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k_dim) * q1), k_dim, q);
  for (int k = 1; k <= k_dim; ++k) {
    truth.set_entry(k, 0, config.intercept_value);
    for (int j = 1; j <= q; ++j) truth.set_entry(k, j, config.slope_value);
  }
  const Eigen::MatrixXd sigma = gen_outcome_covariance(
      k_dim, config.outcome_sd, config.outcome_rho, CovarianceShape::exchangeable);
  const Eigen::MatrixXd chol = cholesky_lower(sigma);
  const double z_crit = stats::normal_quantile(0.975);

  struct Slot {
    bool ok = false;
    Eigen::MatrixXd bias;     // (Q+1) x K layout matching coefficient blocks
    Eigen::MatrixXd covered;  // 0/1
    double sd_bias = 0.0, rho_bias = 0.0;
    bool sd_covered = false, rho_covered = false;
    long resamples = 0;
  };
  std::vector<Slot> slots(static_cast<std::size_t>(config.n_replicates));

  parallel_for(config.n_replicates, config.n_threads, [&](int rep) {
    Slot& slot = slots[static_cast<std::size_t>(rep)];
    try {
      Rng rng = Rng::substream(config.seed, static_cast<std::uint64_t>(rep));
      const Eigen::MatrixXd x = gen_covariates(n, q, config.covariate_rho, rng);
      PresenceDraw presence =
          gen_presence(n, config.n_taxa, config.presence_probability, rng);
      slot.resamples = presence.n_resampled;
      const Eigen::MatrixXd mus = linear_predictors(x, truth);

      std::vector<CompositionSample> samples;
      std::vector<CovariateRecord> records;
      samples.reserve(static_cast<std::size_t>(n));
      records.reserve(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        samples.push_back(gen_mziln_sample(mus.row(i).transpose(), chol,
                                           presence.rows[static_cast<std::size_t>(i)],
                                           rng));
        records.push_back({x.row(i).transpose(), std::to_string(i + 1)});
      }

      MleOptions options;
      options.structure = WorkingCovariance::Kind::exchangeable;
      const MleFit fit = fit_mle_lowdim(samples, records, options);
      const ConfidenceIntervals ci =
          confidence_intervals(fit.beta.beta, fit.beta_covariance, 0.95);

      slot.bias.resize(q1, k_dim);
      slot.covered.resize(q1, k_dim);
      for (int k = 1; k <= k_dim; ++k) {
        for (int j = 0; j < q1; ++j) {
          const int m = (k - 1) * q1 + j;
          slot.bias(j, k - 1) = fit.beta.beta[m] - truth.entry(k, j);
          slot.covered(j, k - 1) =
              (ci.lower[m] <= truth.entry(k, j) && truth.entry(k, j) <= ci.upper[m])
                  ? 1.0
                  : 0.0;
        }
      }
      slot.sd_bias = fit.covariance.sd - config.outcome_sd;
      slot.rho_bias = fit.covariance.rho - config.outcome_rho;
      slot.sd_covered = std::isfinite(fit.sd_se) &&
                        std::fabs(slot.sd_bias) <= z_crit * fit.sd_se;
      slot.rho_covered = std::isfinite(fit.rho_se) &&
                         std::fabs(slot.rho_bias) <= z_crit * fit.rho_se;
      slot.ok = true;
    } catch (const std::exception&) {
      slot.ok = false;
    }
  });

  MetricReport report;
  Eigen::MatrixXd bias_sum = Eigen::MatrixXd::Zero(q1, k_dim);
  Eigen::MatrixXd cover_sum = Eigen::MatrixXd::Zero(q1, k_dim);
  double sd_bias_sum = 0.0, rho_bias_sum = 0.0;
  double sd_cover_sum = 0.0, rho_cover_sum = 0.0;
  int n_ok = 0;
  for (const Slot& slot : slots) {
    report.n_presence_resamples += slot.resamples;
    if (!slot.ok) {
      ++report.n_failed_replicates;
      continue;
    }
    ++n_ok;
    bias_sum += slot.bias;
    cover_sum += slot.covered;
    sd_bias_sum += slot.sd_bias;
    rho_bias_sum += slot.rho_bias;
    sd_cover_sum += slot.sd_covered ? 1.0 : 0.0;
    rho_cover_sum += slot.rho_covered ? 1.0 : 0.0;
  }
  if (n_ok == 0) throw Error("low-dim scenario: every replicate failed");

  const auto group_row = [&](const std::string& name, int j) {
    GroupStat row;
    row.name = name;
    double bias_total = 0.0, pct_total = 0.0, cp_total = 0.0;
    int n_pct = 0;
    for (int k = 1; k <= k_dim; ++k) {
      const double mean_bias = bias_sum(j, k - 1) / n_ok;
      bias_total += mean_bias;
      cp_total += cover_sum(j, k - 1) / n_ok;
      const double truth_value = truth.entry(k, j);
      if (truth_value != 0.0) {
        pct_total += 100.0 * std::fabs(mean_bias) / std::fabs(truth_value);
        ++n_pct;
      }
    }
    row.ave_bias = bias_total / k_dim;
    row.ave_percent_bias = n_pct > 0 ? pct_total / n_pct : 0.0;
    row.ave_cp = 100.0 * cp_total / k_dim;
    return row;
  };
  report.groups.push_back(group_row("beta_00", 0));
  for (int j = 1; j <= q; ++j) {
    report.groups.push_back(group_row("beta_" + std::to_string(j) + "0", j));
  }
  {
    GroupStat sd_row;
    sd_row.name = "sd";
    sd_row.ave_bias = sd_bias_sum / n_ok;
    sd_row.ave_percent_bias =
        100.0 * std::fabs(sd_row.ave_bias) / std::fabs(config.outcome_sd);
    sd_row.ave_cp = 100.0 * sd_cover_sum / n_ok;
    report.groups.push_back(sd_row);
    GroupStat rho_row;
    rho_row.name = "rho";
    rho_row.ave_bias = rho_bias_sum / n_ok;
    rho_row.ave_percent_bias =
        config.outcome_rho != 0.0
            ? 100.0 * std::fabs(rho_row.ave_bias) / std::fabs(config.outcome_rho)
            : 0.0;
    rho_row.ave_cp = 100.0 * rho_cover_sum / n_ok;
    report.groups.push_back(rho_row);
  }
  return report;
}

MetricReport run_highdim_scenario(const ScenarioConfig& config) {
  validate_common(config);
  if (config.n_covariates < 1) {
    throw ConfigError("high-dim scenario: needs at least one covariate");
  }
  if (!(config.snr > 0.0)) throw ConfigError("high-dim scenario: SNR must be positive");
  const int n = config.n_subjects;
  const int k_dim = config.n_taxa - 1;
  const int q = config.n_covariates;
  const bool relabel =
      config.reference_taxon >= 1 && config.reference_taxon != config.n_taxa;

  struct Slot {
    bool ok = false;
    SelectionCounts model;
    SelectionCounts baseline;
    bool has_baseline = false;
    long resamples = 0;
  };
  std::vector<Slot> slots(static_cast<std::size_t>(config.n_replicates));

  parallel_for(config.n_replicates, config.n_threads, [&](int rep) {
    Slot& slot = slots[static_cast<std::size_t>(rep)];
    try {
      Rng rng = Rng::substream(config.seed, static_cast<std::uint64_t>(rep));
      const Eigen::MatrixXd x = gen_covariates(n, q, config.covariate_rho, rng);
      const SparseBeta sparse =
          gen_sparse_beta(k_dim, q, config.n_active_covariates,
                          config.taxa_per_active_covariate, config.beta_low,
                          config.beta_high, rng);
      const Eigen::MatrixXd mus = linear_predictors(x, sparse.beta);
      const double sigma = calibrate_sigma(config.snr, mus);
      Eigen::MatrixXd chol;  // empty when sigma = 0 (noiseless)
      if (sigma > 0.0) {
        chol = cholesky_lower(
            gen_outcome_covariance(k_dim, sigma, config.outcome_rho, config.outcome_shape));
      }
      PresenceDraw presence =
          gen_presence(n, config.n_taxa, config.presence_probability, rng);
      slot.resamples = presence.n_resampled;

      std::vector<CompositionSample> samples;
      std::vector<CovariateRecord> records;
      samples.reserve(static_cast<std::size_t>(n));
      records.reserve(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd u = gen_misspecified_u(
            mus.row(i).transpose(), chol, config.misspec_gamma, sigma, rng);
        samples.push_back(
            compose_observed(u, presence.rows[static_cast<std::size_t>(i)]));
        records.push_back({x.row(i).transpose(), std::to_string(i + 1)});
      }

      std::vector<SupportEntry> truth = sparse.truth;
      if (relabel) {
        samples = relabel_reference(samples, config.reference_taxon);
        truth = relabel_truth(sparse.beta, config.reference_taxon);
      }

      CrossValidationOptions cv_options;
      cv_options.path = config.path;
      cv_options.one_se_rule = config.one_se_rule;
      const std::uint64_t cv_seed =
          mix_seed(config.seed, 0x666f6c64ULL + static_cast<std::uint64_t>(rep));
      const PathResult path = cross_validate(
          samples, records, WorkingCovariance::identity(),
          default_penalty(config.penalty_family), config.cv_folds, cv_seed, cv_options);
      slot.model = selection_metrics(selected_support(path), truth);

      if (config.run_spearman) {
        slot.baseline =
            selection_metrics(spearman_baseline(samples, records, config.fdr_q), truth);
        slot.has_baseline = true;
      }
      slot.ok = true;
    } catch (const std::exception&) {
      slot.ok = false;
    }
  });

  MetricReport report;
  for (const Slot& slot : slots) {
    report.n_presence_resamples += slot.resamples;
    if (!slot.ok) {
      ++report.n_failed_replicates;
      continue;
    }
    report.model_replicates.push_back(slot.model);
    if (slot.has_baseline) report.baseline_replicates.push_back(slot.baseline);
  }
  if (report.model_replicates.empty()) {
    throw Error("high-dim scenario: every replicate failed");
  }
  report.model = summarize_selection(report.model_replicates);
  report.baseline = summarize_selection(report.baseline_replicates);
  return report;
}

}  // namespace mziln
