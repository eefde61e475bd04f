#include "mziln/commands.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <span>
#include <sstream>
#include <vector>

#include "json.hpp"
#include "mziln/errors.hpp"
#include "mziln/path.hpp"
#include "mziln/simulate.hpp"
#include "mziln/stats.hpp"
#include "mziln/version.hpp"

namespace mziln {

namespace {

using ordered_json = nlohmann::ordered_json;

/// All commands funnel through here so the exit-code contract lives in one
/// place: configuration and parse problems exit 1, degenerate data exits 2.
int run_guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IngestError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDegenerate;
  } catch (const DegenerateSample& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDegenerate;
  } catch (const EmptySystem& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDegenerate;
  } catch (const SingularCovariance& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDegenerate;
  } catch (const RankDeficient& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDegenerate;
  } catch (const MissingMass& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDegenerate;
  } catch (const NoSignal& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDegenerate;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

std::string join_path(const std::string& dir, const std::string& file) {
  if (dir.empty() || dir == ".") return file;
  return dir.back() == '/' ? dir + file : dir + "/" + file;
}

/// First lines of every output table: tool version, seed, and the resolved
/// configuration on one line. No timestamps, so reruns stay byte-identical.
std::string header_comment(const std::string& command, std::uint64_t seed,
                           const std::string& config_line) {
  std::ostringstream out;
  out << "# mziln " << kVersion << ' ' << command << '\n'
      << "# seed = " << seed << '\n'
      << "# config: " << config_line << '\n';
  return out.str();
}

std::string flatten_config(const std::string& multi_line) {
  std::string out;
  for (char ch : multi_line) {
    if (ch == '\n') {
      if (!out.empty() && out.back() != ' ') out += "; ";
    } else if (ch != ' ') {
      out += ch;
    } else if (!out.empty() && out.back() == ';') {
      out += ' ';
    }
  }
  while (!out.empty() && (out.back() == ' ' || out.back() == ';')) out.pop_back();
  return out;
}

const char* taxa_mode_name(TaxaMode mode) {
  return mode == TaxaMode::counts ? "counts" : "relative";
}

void warn_ingest(const IngestResult& data) {
  if (!data.dropped_taxa.empty()) {
    std::cerr << "warning: dropped all-zero taxa:";
    for (const auto& name : data.dropped_taxa) std::cerr << " '" << name << "'";
    std::cerr << '\n';
  }
  if (data.n_subjects_dropped_zero > 0)
    std::cerr << "warning: dropped " << data.n_subjects_dropped_zero
              << " subject(s) with all-zero abundance rows\n";
  if (data.n_subjects_dropped_join > 0)
    std::cerr << "warning: dropped " << data.n_subjects_dropped_join
              << " subject(s) missing from the covariate table\n";
  if (data.n_subjects_dropped_missing > 0)
    std::cerr << "warning: dropped " << data.n_subjects_dropped_missing
              << " subject(s) with missing covariate values\n";
}

PenaltySpec make_penalty(PenaltySpec::Family family) {
  switch (family) {
    case PenaltySpec::Family::lasso: return PenaltySpec::lasso(1.0);
    case PenaltySpec::Family::adaptive_lasso: return PenaltySpec::adaptive_lasso(1.0);
    case PenaltySpec::Family::elastic_net: return PenaltySpec::elastic_net(1.0);
    case PenaltySpec::Family::scad: return PenaltySpec::scad(1.0);
    case PenaltySpec::Family::mcp: break;
  }
  return PenaltySpec::mcp(1.0);
}

}  // namespace

int cmd_fit(const FitArgs& args) {
  return run_guarded([&]() {
    if (args.folds < 2) throw ConfigError("--folds must be at least 2");
    if (args.lambda_grid_size < 2)
      throw ConfigError("--lambda-grid-size must be at least 2");
    PenaltySpec penalty = make_penalty(parse_penalty_family(args.penalty));

    IngestOptions ingest_options;
    ingest_options.reference_taxon = args.reference_taxon;
    ingest_options.mode = args.mode;
    ingest_options.transpose_taxa = args.transpose_taxa;
    ingest_options.transpose_covariates = args.transpose_covariates;
    IngestResult data = ingest(args.taxa_path, args.covariates_path, ingest_options);
    warn_ingest(data);

    CrossValidationOptions cv_options;
    cv_options.path.grid_size = args.lambda_grid_size;
    cv_options.one_se_rule = args.one_se_rule;
    PathResult path = cross_validate(data.samples, data.covariates,
                                     WorkingCovariance::identity(), penalty,
                                     args.folds, args.seed, cv_options);
    const CoefficientVector& beta = path.selected_coefficients();
    std::vector<SupportEntry> support = selected_support(path);
    const int selected_index = path.selected_index.value();

    const int n_taxa = static_cast<int>(data.taxa_names.size());
    const int n_ratios = beta.n_ratios;
    const int n_covariates = beta.n_covariates;
    int n_usable = 0;
    for (const auto& sample : data.samples)
      if (sample.n_present() >= 2) ++n_usable;

    std::ostringstream config;
    config << "taxa=" << args.taxa_path << "; covariates=" << args.covariates_path
           << "; reference="
           << (args.reference_taxon.empty() ? data.taxa_names.back()
                                            : args.reference_taxon)
           << "; penalty=" << penalty_family_name(penalty.family)
           << "; folds=" << args.folds
           << "; lambda_grid_size=" << args.lambda_grid_size
           << "; one_se_rule=" << (args.one_se_rule ? "true" : "false")
           << "; mode=" << taxa_mode_name(args.mode);
    const std::string header = header_comment("fit", args.seed, config.str());

    // Full coefficient table at the selected lambda.
    {
      std::ostringstream out;
      out << header << "taxon\tcovariate\testimate\n";
      for (int k = 1; k <= n_ratios; ++k)
        for (int q = 0; q <= n_covariates; ++q)
          out << data.taxa_names[static_cast<std::size_t>(k - 1)] << '\t'
              << (q == 0 ? std::string("(intercept)")
                         : data.covariate_names[static_cast<std::size_t>(q - 1)])
              << '\t' << format_full(beta.entry(k, q)) << '\n';
      write_text_atomic(join_path(args.out_dir, "coefficients.tsv"), out.str());
    }

    // Selected associations, strongest first.
    {
      std::vector<std::size_t> order(support.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(beta.entry(support[a].taxon, support[a].covariate)) >
               std::abs(beta.entry(support[b].taxon, support[b].covariate));
      });
      std::ostringstream out;
      out << header << "taxon\tcovariate\testimate\tdirection\n";
      for (std::size_t i : order) {
        const SupportEntry& entry = support[i];
        out << data.taxa_names[static_cast<std::size_t>(entry.taxon - 1)] << '\t'
            << data.covariate_names[static_cast<std::size_t>(entry.covariate - 1)]
            << '\t' << format_full(beta.entry(entry.taxon, entry.covariate)) << '\t'
            << (entry.direction > 0 ? "+" : "-") << '\n';
      }
      write_text_atomic(join_path(args.out_dir, "selected.tsv"), out.str());
    }

    // Cross-validation curve.
    {
      std::ostringstream out;
      out << header << "lambda\tsupport_size\tcv_mse_mean\tcv_mse_se\tselected\n";
      for (std::size_t i = 0; i < path.lambdas.size(); ++i)
        out << format_full(path.lambdas[i]) << '\t' << path.support_sizes[i] << '\t'
            << format_full(path.cv_mse_mean[i]) << '\t'
            << format_full(path.cv_mse_se[i]) << '\t'
            << (static_cast<int>(i) == selected_index ? 1 : 0) << '\n';
      write_text_atomic(join_path(args.out_dir, "cv.tsv"), out.str());
    }

    // Composition shifts: per covariate, the composition reached from the
    // neutral 1/(K+1) point by one unit of that covariate.
    std::vector<double> magnitudes(static_cast<std::size_t>(n_covariates));
    {
      std::ostringstream out;
      out << header << "covariate\ttaxon\tshift\tdirection\n";
      for (int q = 1; q <= n_covariates; ++q) {
        Eigen::VectorXd slopes(n_ratios);
        for (int k = 1; k <= n_ratios; ++k) slopes[k - 1] = beta.entry(k, q);
        CovariateShift shift = covariate_shift(slopes);
        magnitudes[static_cast<std::size_t>(q - 1)] = disturbance_magnitude(slopes);
        for (int t = 0; t < n_taxa; ++t)
          out << data.covariate_names[static_cast<std::size_t>(q - 1)] << '\t'
              << data.taxa_names[static_cast<std::size_t>(t)] << '\t'
              << format_full(shift.shift[t]) << '\t'
              << shift.signs[static_cast<std::size_t>(t)] << '\n';
      }
      write_text_atomic(join_path(args.out_dir, "shifts.tsv"), out.str());
    }

    // Machine-readable run summary.
    {
      ordered_json summary;
      summary["version"] = kVersion;
      summary["command"] = "fit";
      summary["seed"] = args.seed;
      summary["config"] = {{"taxa", args.taxa_path},
                           {"covariates", args.covariates_path},
                           {"reference_taxon", data.taxa_names.back()},
                           {"penalty", penalty_family_name(penalty.family)},
                           {"folds", args.folds},
                           {"lambda_grid_size", args.lambda_grid_size},
                           {"one_se_rule", args.one_se_rule},
                           {"mode", taxa_mode_name(args.mode)}};
      summary["data"] = {{"n_subjects_used", data.samples.size()},
                         {"n_subjects_informative", n_usable},
                         {"n_subjects_dropped_join", data.n_subjects_dropped_join},
                         {"n_subjects_dropped_missing", data.n_subjects_dropped_missing},
                         {"n_subjects_dropped_zero", data.n_subjects_dropped_zero},
                         {"n_taxa", n_taxa},
                         {"n_covariates", n_covariates},
                         {"dropped_taxa", data.dropped_taxa}};
      ordered_json shift_json = ordered_json::object();
      for (int q = 1; q <= n_covariates; ++q)
        shift_json[data.covariate_names[static_cast<std::size_t>(q - 1)]] =
            magnitudes[static_cast<std::size_t>(q - 1)];
      summary["fit"] = {{"lambda_selected", path.lambda_selected.value()},
                        {"n_lambda", path.lambdas.size()},
                        {"cv_mse_at_selected",
                         path.cv_mse_mean[static_cast<std::size_t>(selected_index)]},
                        {"n_selected", support.size()},
                        {"disturbance_magnitude", shift_json}};
      write_text_atomic(join_path(args.out_dir, "summary.json"),
                        summary.dump(2) + "\n");
    }
    return kExitOk;
  });
}

int cmd_simulate(const SimulateArgs& args) {
  return run_guarded([&]() {
    Manifest manifest = read_manifest(args.manifest_path);
    if (args.threads > 0) manifest.base.n_threads = args.threads;
    if (args.seed > 0) manifest.base.seed = args.seed;

    const std::string config_line = flatten_config(manifest_to_string(manifest));
    const std::string header =
        header_comment("simulate", manifest.base.seed, config_line);

    const bool sweep = !manifest.sweep_field.empty();
    std::vector<double> sweep_values = sweep ? manifest.sweep_values
                                             : std::vector<double>{0.0};
    std::vector<MetricReport> reports;
    std::vector<ScenarioConfig> configs;
    for (double value : sweep_values) {
      ScenarioConfig config =
          sweep ? apply_sweep(manifest.base, manifest.sweep_field, value)
                : manifest.base;
      configs.push_back(config);
      reports.push_back(manifest.lowdim ? run_lowdim_scenario(config)
                                        : run_highdim_scenario(config));
      if (reports.back().n_failed_replicates > 0)
        std::cerr << "warning: " << reports.back().n_failed_replicates
                  << " replicate(s) failed"
                  << (sweep ? " at " + manifest.sweep_field + "=" + format_human(value)
                            : std::string())
                  << '\n';
    }

    const std::string sweep_col = sweep ? manifest.sweep_field + "\t" : "";
    std::ostringstream metrics;
    metrics << header;
    if (manifest.lowdim) {
      metrics << sweep_col << "Parameter\tTrue\tAve.Bias\tAve.Percent.Bias\tAve.CP\n";
      for (std::size_t s = 0; s < reports.size(); ++s) {
        const ScenarioConfig& config = configs[s];
        for (const GroupStat& group : reports[s].groups) {
          double truth = config.slope_value;
          if (group.name == "beta_00") truth = config.intercept_value;
          else if (group.name == "sd") truth = config.outcome_sd;
          else if (group.name == "rho") truth = config.outcome_rho;
          if (sweep) metrics << format_full(sweep_values[s]) << '\t';
          metrics << group.name << '\t' << format_full(truth) << '\t'
                  << format_full(group.ave_bias) << '\t'
                  << format_full(group.ave_percent_bias) << '\t'
                  << format_full(group.ave_cp) << '\n';
        }
      }
    } else {
      const bool baseline = manifest.base.run_spearman;
      metrics << sweep_col
              << "recall_mean\trecall_sd\tprecision_mean\tprecision_sd\t"
                 "f1_mean\tf1_sd\ttp\tfp\tfn";
      if (baseline)
        metrics << "\tbaseline_recall_mean\tbaseline_recall_sd\t"
                   "baseline_precision_mean\tbaseline_precision_sd\t"
                   "baseline_f1_mean\tbaseline_f1_sd\tbaseline_tp\tbaseline_fp\t"
                   "baseline_fn";
      metrics << "\tn_failed\tn_presence_resamples\n";
      for (std::size_t s = 0; s < reports.size(); ++s) {
        const MetricReport& report = reports[s];
        if (sweep) metrics << format_full(sweep_values[s]) << '\t';
        const SelectionSummary& m = report.model;
        metrics << format_full(m.recall_mean) << '\t' << format_full(m.recall_sd)
                << '\t' << format_full(m.precision_mean) << '\t'
                << format_full(m.precision_sd) << '\t' << format_full(m.f1_mean)
                << '\t' << format_full(m.f1_sd) << '\t' << m.tp << '\t' << m.fp
                << '\t' << m.fn;
        if (baseline) {
          const SelectionSummary& b = report.baseline;
          metrics << '\t' << format_full(b.recall_mean) << '\t'
                  << format_full(b.recall_sd) << '\t'
                  << format_full(b.precision_mean) << '\t'
                  << format_full(b.precision_sd) << '\t' << format_full(b.f1_mean)
                  << '\t' << format_full(b.f1_sd) << '\t' << b.tp << '\t' << b.fp
                  << '\t' << b.fn;
        }
        metrics << '\t' << report.n_failed_replicates << '\t'
                << report.n_presence_resamples << '\n';
      }
    }
    write_text_atomic(join_path(args.out_dir, manifest.name + "_metrics.tsv"),
                      metrics.str());

    if (!manifest.lowdim) {
      const bool baseline = manifest.base.run_spearman;
      std::ostringstream reps;
      reps << header << sweep_col
           << "replicate\ttp\tfp\tfn\trecall\tprecision\tf1";
      if (baseline)
        reps << "\tbaseline_tp\tbaseline_fp\tbaseline_fn\tbaseline_recall\t"
                "baseline_precision\tbaseline_f1";
      reps << '\n';
      for (std::size_t s = 0; s < reports.size(); ++s) {
        const MetricReport& report = reports[s];
        for (std::size_t r = 0; r < report.model_replicates.size(); ++r) {
          if (sweep) reps << format_full(sweep_values[s]) << '\t';
          const SelectionCounts& c = report.model_replicates[r];
          reps << (r + 1) << '\t' << c.tp << '\t' << c.fp << '\t' << c.fn << '\t'
               << format_full(c.recall) << '\t' << format_full(c.precision)
               << '\t' << format_full(c.f1);
          if (baseline && r < report.baseline_replicates.size()) {
            const SelectionCounts& b = report.baseline_replicates[r];
            reps << '\t' << b.tp << '\t' << b.fp << '\t' << b.fn << '\t'
                 << format_full(b.recall) << '\t' << format_full(b.precision)
                 << '\t' << format_full(b.f1);
          }
          reps << '\n';
        }
      }
      write_text_atomic(join_path(args.out_dir, manifest.name + "_replicates.tsv"),
                        reps.str());
    }
    return kExitOk;
  });
}

int cmd_transform(const TransformArgs& args) {
  return run_guarded([&]() {
    IngestOptions ingest_options;
    ingest_options.reference_taxon = args.reference_taxon;
    ingest_options.mode = args.mode;
    ingest_options.transpose_taxa = args.transpose_taxa;
    IngestResult data = ingest_taxa(args.taxa_path, ingest_options);
    warn_ingest(data);

    std::ostringstream config;
    config << "taxa=" << args.taxa_path << "; reference=" << data.taxa_names.back()
           << "; mode=" << taxa_mode_name(args.mode);
    std::ostringstream out;
    out << header_comment("transform", 0, config.str());
    out << "# taxa:";
    for (const auto& name : data.taxa_names) out << ' ' << name;
    out << '\n';
    out << "subject_id\tstatus\treference_index\tnonzero_indices\tlog_ratios\n";

    for (std::size_t i = 0; i < data.samples.size(); ++i) {
      const CompositionSample& sample = data.samples[i];
      out << data.subject_ids[i] << '\t';
      if (sample.n_present() < 2) {
        out << "DEGENERATE\t\t\t\n";
        continue;
      }
      auto [transform, u] = log_ratio_transform(sample);
      out << "OK\t" << transform.last_nonzero() << '\t';
      for (std::size_t j = 0; j < transform.nonzero_indices.size(); ++j) {
        if (j > 0) out << ',';
        out << transform.nonzero_indices[j];
      }
      out << '\t';
      for (Eigen::Index j = 0; j < u.size(); ++j) {
        if (j > 0) out << ',';
        out << format_full(u[j]);
      }
      out << '\n';
    }
    write_text_atomic(join_path(args.out_dir, "transform.tsv"), out.str());
    return kExitOk;
  });
}

int cmd_spearman(const SpearmanArgs& args) {
  return run_guarded([&]() {
    if (!(args.fdr > 0.0 && args.fdr < 1.0))
      throw ConfigError("--fdr must be strictly between 0 and 1");
    IngestOptions ingest_options;
    ingest_options.mode = args.mode;
    ingest_options.transpose_taxa = args.transpose_taxa;
    ingest_options.transpose_covariates = args.transpose_covariates;
    IngestResult data = ingest(args.taxa_path, args.covariates_path, ingest_options);
    warn_ingest(data);

    const int n = static_cast<int>(data.samples.size());
    if (n < 10)
      throw IngestError("Spearman screen needs at least 10 subjects, got " +
                        std::to_string(n));
    const int n_taxa = static_cast<int>(data.taxa_names.size());
    const int n_covariates = static_cast<int>(data.covariate_names.size());

    struct Row {
      int taxon = 0, covariate = 0;
      double rho = 0.0, p = 1.0;
      bool tested = false, selected = false;
    };
    std::vector<Row> rows;
    std::vector<double> p_values;
    std::vector<std::size_t> tested_rows;
    for (int t = 0; t < n_taxa; ++t) {
      Eigen::VectorXd taxon_col(n);
      for (int i = 0; i < n; ++i) taxon_col[i] = data.samples[static_cast<std::size_t>(i)].values[t];
      for (int q = 0; q < n_covariates; ++q) {
        Eigen::VectorXd cov_col(n);
        for (int i = 0; i < n; ++i)
          cov_col[i] = data.covariates[static_cast<std::size_t>(i)].x[q];
        Row row;
        row.taxon = t + 1;
        row.covariate = q + 1;
        try {
          row.rho = stats::spearman_rho(
              std::span<const double>(taxon_col.data(), static_cast<std::size_t>(n)),
              std::span<const double>(cov_col.data(), static_cast<std::size_t>(n)));
          row.p = stats::spearman_p_value(row.rho, static_cast<std::size_t>(n));
          row.tested = true;
        } catch (const InvalidInput&) {
          row.tested = false;  // constant column, no rank information
        }
        if (row.tested) {
          p_values.push_back(row.p);
          tested_rows.push_back(rows.size());
        }
        rows.push_back(row);
      }
    }
    std::vector<bool> rejected = stats::benjamini_hochberg(p_values, args.fdr);
    for (std::size_t i = 0; i < tested_rows.size(); ++i)
      rows[tested_rows[i]].selected = rejected[i];

    std::ostringstream config;
    config << "taxa=" << args.taxa_path << "; covariates=" << args.covariates_path
           << "; fdr=" << format_full(args.fdr)
           << "; mode=" << taxa_mode_name(args.mode);
    std::ostringstream out;
    out << header_comment("spearman", 0, config.str());
    out << "taxon\tcovariate\trho\tp_value\tdirection\tselected\n";
    for (const Row& row : rows) {
      out << data.taxa_names[static_cast<std::size_t>(row.taxon - 1)] << '\t'
          << data.covariate_names[static_cast<std::size_t>(row.covariate - 1)]
          << '\t';
      if (row.tested)
        out << format_full(row.rho) << '\t' << format_full(row.p) << '\t'
            << (row.rho > 0 ? "+" : (row.rho < 0 ? "-" : "0")) << '\t'
            << (row.selected ? 1 : 0) << '\n';
      else
        out << "NA\tNA\t0\t0\n";
    }
    write_text_atomic(join_path(args.out_dir, "spearman.tsv"), out.str());
    return kExitOk;
  });
}

}  // namespace mziln
