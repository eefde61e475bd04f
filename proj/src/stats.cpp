#include "mziln/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "mziln/errors.hpp"

namespace mziln::stats {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidInput("normal_quantile: p must be in (0,1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double student_t_p_two_sided(double t, double dof) {
  if (!(dof > 0)) throw InvalidInput("student_t_p_two_sided: dof must be positive");
  if (std::isinf(t)) return 0.0;
  boost::math::students_t_distribution<double> dist(dof);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
}

double kolmogorov_smirnov_p(double d, std::size_t n) {
  if (d <= 0.0) return 1.0;
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const double lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
  // Kolmogorov tail series; terms decay fast for lambda > 0.3.
  double sum = 0.0;
  double sign = 1.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += sign * term;
    if (term < 1e-12) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

double ks_statistic_normal(std::span<const double> values, double mean, double sd) {
  if (values.empty()) throw InvalidInput("ks_statistic_normal: empty sample");
  if (!(sd > 0)) throw InvalidInput("ks_statistic_normal: sd must be positive");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double cdf = normal_cdf((sorted[i] - mean) / sd);
    d = std::max(d, std::fabs(cdf - static_cast<double>(i + 1) / n));
    d = std::max(d, std::fabs(cdf - static_cast<double>(i) / n));
  }
  return d;
}

std::vector<double> midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidInput("spearman_rho: length mismatch");
  if (x.size() < 3) throw InvalidInput("spearman_rho: need at least 3 observations");
  const auto rx = midranks(x);
  const auto ry = midranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = rx[i] - mean;
    const double dy = ry[i] - mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw InvalidInput("spearman_rho: constant column");
  return sxy / std::sqrt(sxx * syy);
}

double spearman_p_value(double rho, std::size_t n) {
  if (n < 4) return 1.0;
  const double dof = static_cast<double>(n - 2);
  const double denom = 1.0 - rho * rho;
  if (denom <= std::numeric_limits<double>::epsilon()) return 0.0;
  const double t = rho * std::sqrt(dof / denom);
  return student_t_p_two_sided(t, dof);
}

std::vector<bool> benjamini_hochberg(std::span<const double> p_values, double q) {
  const std::size_t m = p_values.size();
  std::vector<bool> reject(m, false);
  if (m == 0) return reject;
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
  std::size_t cutoff = 0;  // number of rejections
  for (std::size_t i = 0; i < m; ++i) {
    const double threshold = q * static_cast<double>(i + 1) / static_cast<double>(m);
    if (p_values[order[i]] <= threshold) cutoff = i + 1;
  }
  for (std::size_t i = 0; i < cutoff; ++i) reject[order[i]] = true;
  return reject;
}

}  // namespace mziln::stats
