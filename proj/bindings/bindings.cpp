#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <string>
#include <vector>

#include "mziln/composition.hpp"
#include "mziln/density.hpp"
#include "mziln/errors.hpp"
#include "mziln/mle.hpp"
#include "mziln/path.hpp"
#include "mziln/simulate.hpp"
#include "mziln/version.hpp"

namespace py = pybind11;
using namespace mziln;

namespace {

/// Rows of a relative-abundance matrix to composition samples; rows are
/// renormalized so callers can pass raw counts.
std::vector<CompositionSample> samples_from_matrix(const Eigen::MatrixXd& abundances) {
  std::vector<CompositionSample> samples;
  samples.reserve(static_cast<std::size_t>(abundances.rows()));
  for (Eigen::Index i = 0; i < abundances.rows(); ++i) {
    Eigen::VectorXd row = abundances.row(i).transpose();
    double total = row.sum();
    if (total <= 0.0)
      throw InvalidInput("abundance row " + std::to_string(i) + " sums to zero");
    samples.push_back(CompositionSample::from_values(row / total));
  }
  return samples;
}

std::vector<CovariateRecord> covariates_from_matrix(const Eigen::MatrixXd& x) {
  std::vector<CovariateRecord> records;
  records.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    records.push_back({x.row(i).transpose(), std::to_string(i)});
  return records;
}

py::list support_to_list(const std::vector<SupportEntry>& support) {
  py::list out;
  for (const auto& entry : support)
    out.append(py::make_tuple(entry.taxon, entry.covariate, entry.direction));
  return out;
}

}  // namespace

PYBIND11_MODULE(_mziln, m) {
  m.doc() = "Conditional regression for zero-inflated compositional data";
  m.attr("__version__") = kVersion;

  py::register_exception<DegenerateSample>(m, "DegenerateSampleError");
  py::register_exception<EmptySystem>(m, "EmptySystemError");
  py::register_exception<NoSignal>(m, "NoSignalError");

  m.def(
      "log_ratio_transform",
      [](const Eigen::VectorXd& values) {
        CompositionSample sample = CompositionSample::from_values(values);
        auto [transform, u] = log_ratio_transform(sample);
        return py::make_tuple(transform.nonzero_indices, transform.last_nonzero(), u);
      },
      py::arg("values"),
      "Log ratios of a composition against its last nonzero taxon; returns "
      "(nonzero_indices, denominator_index, log_ratios), indices 1-based.");

  m.def(
      "inverse_log_ratio",
      [](const Eigen::VectorXd& u) { return inverse_log_ratio(u).values; },
      py::arg("log_ratios"),
      "All-positive composition whose log ratios against the last taxon equal "
      "the input.");

  m.def(
      "mziln_log_density",
      [](const Eigen::VectorXd& values, const Eigen::VectorXd& mean,
         const Eigen::MatrixXd& covariance,
         const std::map<std::vector<bool>, double>& masses) {
        MzilnParams params{mean, covariance, {}};
        for (const auto& [pattern, mass] : masses)
          params.discrete_masses.emplace(pattern, mass);
        return mziln_log_density(CompositionSample::from_values(values), params);
      },
      py::arg("values"), py::arg("mean"), py::arg("covariance"), py::arg("masses"),
      "Log density of one observed composition under the zero-inflated "
      "logistic-normal law.");

  m.def(
      "fit_mle",
      [](const Eigen::MatrixXd& abundances, const Eigen::MatrixXd& covariates,
         double level) {
        auto samples = samples_from_matrix(abundances);
        auto records = covariates_from_matrix(covariates);
        MleFit fit = fit_mle_lowdim(samples, records);
        ConfidenceIntervals ci =
            confidence_intervals(fit.beta.beta, fit.beta_covariance, level);
        py::dict out;
        out["beta"] = fit.beta.beta;
        out["ci_lower"] = ci.lower;
        out["ci_upper"] = ci.upper;
        out["sd"] = fit.covariance.sd;
        out["rho"] = fit.covariance.rho;
        out["sd_se"] = fit.sd_se;
        out["rho_se"] = fit.rho_se;
        out["log_likelihood"] = fit.log_likelihood;
        out["converged"] = fit.converged;
        out["n_subjects_used"] = fit.n_subjects_used;
        out["n_ratios"] = fit.beta.n_ratios;
        out["n_covariates"] = fit.beta.n_covariates;
        return out;
      },
      py::arg("abundances"), py::arg("covariates"), py::arg("level") = 0.95,
      "Structured-covariance maximum-likelihood fit; beta is stacked as one "
      "(intercept, slopes) block per non-reference taxon.");

  m.def(
      "fit_path",
      [](const Eigen::MatrixXd& abundances, const Eigen::MatrixXd& covariates,
         const std::string& penalty, int folds, std::uint64_t seed, int grid_size,
         bool one_se_rule) {
        auto samples = samples_from_matrix(abundances);
        auto records = covariates_from_matrix(covariates);
        PenaltySpec spec;
        spec.family = parse_penalty_family(penalty);
        switch (spec.family) {
          case PenaltySpec::Family::scad: spec = PenaltySpec::scad(1.0); break;
          case PenaltySpec::Family::mcp: spec = PenaltySpec::mcp(1.0); break;
          case PenaltySpec::Family::elastic_net:
            spec = PenaltySpec::elastic_net(1.0);
            break;
          case PenaltySpec::Family::adaptive_lasso:
            spec = PenaltySpec::adaptive_lasso(1.0);
            break;
          case PenaltySpec::Family::lasso: spec = PenaltySpec::lasso(1.0); break;
        }
        CrossValidationOptions options;
        options.path.grid_size = grid_size;
        options.one_se_rule = one_se_rule;
        PathResult path = cross_validate(samples, records,
                                         WorkingCovariance::identity(), spec,
                                         folds, seed, options);
        py::dict out;
        out["lambdas"] = path.lambdas;
        out["cv_mse_mean"] = path.cv_mse_mean;
        out["cv_mse_se"] = path.cv_mse_se;
        out["support_sizes"] = path.support_sizes;
        out["lambda_selected"] = path.lambda_selected.value();
        out["selected_index"] = path.selected_index.value();
        out["beta"] = path.selected_coefficients().beta;
        out["support"] = support_to_list(selected_support(path));
        out["n_ratios"] = path.selected_coefficients().n_ratios;
        out["n_covariates"] = path.selected_coefficients().n_covariates;
        return out;
      },
      py::arg("abundances"), py::arg("covariates"), py::arg("penalty") = "mcp",
      py::arg("folds") = 10, py::arg("seed") = 1, py::arg("grid_size") = 100,
      py::arg("one_se_rule") = false,
      "Penalized coordinate-descent path with subject-level cross-validation; "
      "support entries are (taxon, covariate, sign), 1-based.");

  m.def(
      "spearman_screen",
      [](const Eigen::MatrixXd& abundances, const Eigen::MatrixXd& covariates,
         double fdr_q) {
        auto samples = samples_from_matrix(abundances);
        auto records = covariates_from_matrix(covariates);
        return support_to_list(spearman_baseline(samples, records, fdr_q));
      },
      py::arg("abundances"), py::arg("covariates"), py::arg("fdr_q") = 0.05,
      "Marginal Spearman screen with Benjamini-Hochberg control; returns "
      "selected (taxon, covariate, sign) tuples, 1-based.");
}
