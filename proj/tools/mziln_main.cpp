#include <cstdint>
#include <string>

#include "CLI11.hpp"
#include "mziln/commands.hpp"
#include "mziln/version.hpp"

namespace {

mziln::TaxaMode parse_mode(const std::string& value) {
  if (value == "counts") return mziln::TaxaMode::counts;
  if (value == "relative") return mziln::TaxaMode::relative;
  throw CLI::ValidationError("--abundance must be counts or relative");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional regression for zero-inflated compositional data"};
  app.set_version_flag("--version", std::string("mziln ") + mziln::kVersion);
  app.require_subcommand(1);

  std::string format = "tsv";
  app.add_option("--format", format, "Output format")
      ->check(CLI::IsMember({"tsv"}))
      ->capture_default_str();

  mziln::FitArgs fit_args;
  std::string fit_mode = "counts";
  CLI::App* fit = app.add_subcommand(
      "fit", "Penalized conditional-regression fit with cross-validation");
  fit->add_option("--taxa", fit_args.taxa_path, "Taxa abundance table (TSV)")
      ->required();
  fit->add_option("--covariates", fit_args.covariates_path, "Covariate table (TSV)")
      ->required();
  fit->add_option("--reference-taxon", fit_args.reference_taxon,
                  "Taxon used as the reference (default: last column)");
  fit->add_option("--penalty", fit_args.penalty,
                  "Penalty family: lasso|alasso|enet|scad|mcp")
      ->capture_default_str();
  fit->add_option("--folds", fit_args.folds, "Cross-validation folds")
      ->capture_default_str();
  fit->add_option("--lambda-grid-size", fit_args.lambda_grid_size,
                  "Points on the lambda grid")
      ->capture_default_str();
  fit->add_option("--seed", fit_args.seed, "Fold-assignment seed")
      ->capture_default_str();
  fit->add_option("--threads", fit_args.threads, "Worker threads")
      ->envname("MZILN_THREADS")
      ->capture_default_str();
  fit->add_option("--out-dir", fit_args.out_dir, "Output directory")
      ->capture_default_str();
  fit->add_flag("--one-se-rule", fit_args.one_se_rule,
                "Pick the sparsest lambda within one SE of the CV minimum");
  fit->add_option("--abundance", fit_mode, "Taxa table units: counts|relative")
      ->check(CLI::IsMember({"counts", "relative"}))
      ->capture_default_str();
  fit->add_flag("--transpose-taxa", fit_args.transpose_taxa,
                "Taxa file has subjects across the header");
  fit->add_flag("--transpose-covariates", fit_args.transpose_covariates,
                "Covariate file has subjects across the header");

  mziln::SimulateArgs sim_args;
  CLI::App* simulate =
      app.add_subcommand("simulate", "Run a simulation manifest and write metrics");
  simulate->add_option("--manifest", sim_args.manifest_path, "Scenario manifest")
      ->required();
  simulate->add_option("--out-dir", sim_args.out_dir, "Output directory")
      ->capture_default_str();
  simulate->add_option("--threads", sim_args.threads,
                       "Worker threads (0 keeps the manifest value)")
      ->envname("MZILN_THREADS")
      ->capture_default_str();
  simulate->add_option("--seed", sim_args.seed,
                       "Seed override (0 keeps the manifest value)")
      ->capture_default_str();

  mziln::TransformArgs transform_args;
  std::string transform_mode = "counts";
  CLI::App* transform = app.add_subcommand(
      "transform", "Write per-subject log-ratio vectors and presence sets");
  transform->add_option("--taxa", transform_args.taxa_path, "Taxa abundance table (TSV)")
      ->required();
  transform->add_option("--reference-taxon", transform_args.reference_taxon,
                        "Taxon used as the reference (default: last column)");
  transform->add_option("--out-dir", transform_args.out_dir, "Output directory")
      ->capture_default_str();
  transform->add_option("--abundance", transform_mode,
                        "Taxa table units: counts|relative")
      ->check(CLI::IsMember({"counts", "relative"}))
      ->capture_default_str();
  transform->add_flag("--transpose-taxa", transform_args.transpose_taxa,
                      "Taxa file has subjects across the header");

  mziln::SpearmanArgs spearman_args;
  std::string spearman_mode = "counts";
  CLI::App* spearman = app.add_subcommand(
      "spearman", "Marginal Spearman screen with Benjamini-Hochberg control");
  spearman->add_option("--taxa", spearman_args.taxa_path, "Taxa abundance table (TSV)")
      ->required();
  spearman->add_option("--covariates", spearman_args.covariates_path,
                       "Covariate table (TSV)")
      ->required();
  spearman->add_option("--fdr", spearman_args.fdr, "False discovery rate")
      ->capture_default_str();
  spearman->add_option("--out-dir", spearman_args.out_dir, "Output directory")
      ->capture_default_str();
  spearman->add_option("--abundance", spearman_mode,
                       "Taxa table units: counts|relative")
      ->check(CLI::IsMember({"counts", "relative"}))
      ->capture_default_str();
  spearman->add_flag("--transpose-taxa", spearman_args.transpose_taxa,
                     "Taxa file has subjects across the header");
  spearman->add_flag("--transpose-covariates", spearman_args.transpose_covariates,
                     "Covariate file has subjects across the header");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return mziln::kExitConfig;
  }

  if (fit->parsed()) {
    fit_args.mode = parse_mode(fit_mode);
    return mziln::cmd_fit(fit_args);
  }
  if (simulate->parsed()) return mziln::cmd_simulate(sim_args);
  if (transform->parsed()) {
    transform_args.mode = parse_mode(transform_mode);
    return mziln::cmd_transform(transform_args);
  }
  spearman_args.mode = parse_mode(spearman_mode);
  return mziln::cmd_spearman(spearman_args);
}
