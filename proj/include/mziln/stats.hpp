#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mziln::stats {

double normal_cdf(double x);
double normal_quantile(double p);

/// Two-sided p-value for a t statistic with the given degrees of freedom.
double student_t_p_two_sided(double t, double dof);

/// P(D_n > d) for the one-sample Kolmogorov-Smirnov statistic, using the
/// asymptotic Kolmogorov distribution with the Stephens small-sample correction.
double kolmogorov_smirnov_p(double d, std::size_t n);

/// One-sample KS statistic of `values` against N(mean, sd^2).
double ks_statistic_normal(std::span<const double> values, double mean, double sd);

/// Midranks (ties get the average of the ranks they span), 1-based.
std::vector<double> midranks(std::span<const double> values);

/// Spearman rank correlation (Pearson correlation of midranks).
/// Throws InvalidInput if either column is constant.
double spearman_rho(std::span<const double> x, std::span<const double> y);

/// p-value for a Spearman correlation via the t approximation with n-2 dof.
double spearman_p_value(double rho, std::size_t n);

/// Benjamini-Hochberg step-up rule at level q; returns a keep/reject mask
/// aligned with `p_values`.
std::vector<bool> benjamini_hochberg(std::span<const double> p_values, double q);

}  // namespace mziln::stats
