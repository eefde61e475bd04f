#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "mziln/commands.hpp"
#include "mziln/rng.hpp"
#include "mziln/simulate.hpp"
#include "mziln/table_io.hpp"

using namespace mziln;

namespace {

std::filesystem::path temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / ("mziln_cmd_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

struct Fixture {
  std::string taxa_path;
  std::string covariates_path;
};

/// Writes a small MZILN-shaped dataset (5 taxa, 2 covariates, the first
/// covariate pushes the first two log-ratios) as a pair of TSV files.
Fixture write_fixture(const std::filesystem::path& dir, int n_subjects,
                      double presence, std::uint64_t seed) {
  Rng rng(seed);
  const int n_ratios = 4;
  Eigen::MatrixXd sigma = gen_outcome_covariance(n_ratios, 0.6, 0.3,
                                                 CovarianceShape::exchangeable);
  Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(sigma).matrixL();
  auto draw = gen_presence(n_subjects, n_ratios + 1, presence, rng);

  std::ostringstream taxa;
  std::ostringstream covs;
  taxa << "subject\tt1\tt2\tt3\tt4\tt5\n";
  covs << "subject\tx1\tx2\n";
  for (int i = 0; i < n_subjects; ++i) {
    double x1 = rng.normal();
    double x2 = rng.normal();
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(n_ratios);
    mu[0] = 1.5 * x1;
    mu[1] = -1.5 * x1;
    CompositionSample sample =
        gen_mziln_sample(mu, chol, draw.rows[static_cast<std::size_t>(i)], rng);
    taxa << "s" << i;
    for (int k = 0; k <= n_ratios; ++k) taxa << '\t' << format_full(sample.values[k]);
    taxa << '\n';
    covs << "s" << i << '\t' << format_full(x1) << '\t' << format_full(x2) << '\n';
  }
  Fixture fixture;
  fixture.taxa_path = (dir / "taxa.tsv").string();
  fixture.covariates_path = (dir / "covs.tsv").string();
  write_text_atomic(fixture.taxa_path, taxa.str());
  write_text_atomic(fixture.covariates_path, covs.str());
  return fixture;
}

int count_data_rows(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int rows = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    ++rows;
  }
  return rows;
}

}  // namespace

TEST_CASE("cmd_fit writes the full output bundle") {
  auto dir = temp_dir("fit");
  Fixture fixture = write_fixture(dir, 80, 0.9, 11);

  FitArgs args;
  args.taxa_path = fixture.taxa_path;
  args.covariates_path = fixture.covariates_path;
  args.out_dir = (dir / "out").string();
  args.penalty = "lasso";
  args.folds = 4;
  args.lambda_grid_size = 30;
  args.seed = 5;
  REQUIRE(cmd_fit(args) == kExitOk);

  std::string coefficients = read_file(args.out_dir + "/coefficients.tsv");
  CHECK(coefficients.rfind("# mziln", 0) == 0);
  CHECK(coefficients.find("# seed = 5") != std::string::npos);
  // 4 log-ratios x (intercept + 2 covariates)
  CHECK(count_data_rows(coefficients) == 12);

  std::string cv = read_file(args.out_dir + "/cv.tsv");
  CHECK(count_data_rows(cv) == 30);
  CHECK(cv.find("\t1\n") != std::string::npos);  // one row flagged selected

  auto summary = nlohmann::json::parse(read_file(args.out_dir + "/summary.json"));
  CHECK(summary["command"] == "fit");
  CHECK(summary["data"]["n_subjects_used"].get<int>() == 80);
  CHECK(summary["fit"]["lambda_selected"].get<double>() > 0.0);
  CHECK(summary["fit"]["n_lambda"].get<int>() == 30);

  // The planted covariate should dominate the ranked selection table.
  std::string selected = read_file(args.out_dir + "/selected.tsv");
  CHECK(selected.find("x1") != std::string::npos);

  SUBCASE("rerunning with the same seed is byte-identical") {
    FitArgs again = args;
    again.out_dir = (dir / "out2").string();
    REQUIRE(cmd_fit(again) == kExitOk);
    CHECK(read_file(again.out_dir + "/coefficients.tsv") == coefficients);
    CHECK(read_file(again.out_dir + "/cv.tsv") == cv);
  }
}

TEST_CASE("cmd_fit exit codes") {
  auto dir = temp_dir("fit_fail");
  Fixture fixture = write_fixture(dir, 30, 1.0, 3);

  FitArgs args;
  args.taxa_path = fixture.taxa_path;
  args.covariates_path = fixture.covariates_path;
  args.out_dir = (dir / "out").string();

  SUBCASE("unknown penalty is a configuration error") {
    args.penalty = "ridge";
    CHECK(cmd_fit(args) == kExitConfig);
  }
  SUBCASE("too few folds is a configuration error") {
    args.folds = 1;
    CHECK(cmd_fit(args) == kExitConfig);
  }
  SUBCASE("unreadable input is a configuration error") {
    args.taxa_path = (dir / "nope.tsv").string();
    CHECK(cmd_fit(args) == kExitConfig);
  }
  SUBCASE("empty join is a data error") {
    write_text_atomic((dir / "other.tsv").string(), "subject\tx1\nzz\t1\n");
    args.covariates_path = (dir / "other.tsv").string();
    CHECK(cmd_fit(args) == kExitDegenerate);
  }
}

TEST_CASE("cmd_transform round-trips compositions through the file format") {
  auto dir = temp_dir("transform");
  std::string taxa = (dir / "taxa.tsv").string();
  write_text_atomic(taxa,
                    "subject\ta\tb\tc\td\n"
                    "s1\t0.4\t0.3\t0.2\t0.1\n"
                    "s2\t0.5\t0\t0.25\t0.25\n"
                    "s3\t0\t1\t0\t0\n");

  TransformArgs args;
  args.taxa_path = taxa;
  args.out_dir = dir.string();
  REQUIRE(cmd_transform(args) == kExitOk);

  std::string text = read_file(dir.string() + "/transform.tsv");
  CHECK(text.find("# taxa: a b c d\n") != std::string::npos);
  CHECK(text.find("s3\tDEGENERATE") != std::string::npos);

  // Re-ingest s2 (reference taxon d present, taxon b absent) and invert.
  // Taxa indices in the file are 1-based: a=1, c=3, d=4.
  std::istringstream in(text);
  std::string line;
  std::vector<int> nonzero;
  std::vector<double> u;
  while (std::getline(in, line)) {
    if (line.rfind("s2\t", 0) != 0) continue;
    std::istringstream row(line);
    std::string id, status, reference, indices, ratios;
    std::getline(row, id, '\t');
    std::getline(row, status, '\t');
    std::getline(row, reference, '\t');
    std::getline(row, indices, '\t');
    std::getline(row, ratios, '\t');
    CHECK(status == "OK");
    CHECK(reference == "4");
    std::istringstream index_stream(indices);
    std::istringstream ratio_stream(ratios);
    std::string token;
    while (std::getline(index_stream, token, ',')) nonzero.push_back(std::stoi(token));
    while (std::getline(ratio_stream, token, ',')) u.push_back(std::stod(token));
  }
  REQUIRE(nonzero == std::vector<int>{1, 3, 4});
  REQUIRE(u.size() == 2);
  double denom = 1.0;
  for (double value : u) denom += std::exp(value);
  CHECK(std::exp(u[0]) / denom == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(std::exp(u[1]) / denom == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(1.0 / denom == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("cmd_spearman screens associations and honours --fdr validation") {
  auto dir = temp_dir("spearman");
  Fixture fixture = write_fixture(dir, 60, 1.0, 21);

  SpearmanArgs args;
  args.taxa_path = fixture.taxa_path;
  args.covariates_path = fixture.covariates_path;
  args.out_dir = (dir / "out").string();
  REQUIRE(cmd_spearman(args) == kExitOk);

  std::string table = read_file(args.out_dir + "/spearman.tsv");
  // 5 taxa x 2 covariates, all columns vary
  CHECK(count_data_rows(table) == 10);
  CHECK(table.find("selected") != std::string::npos);

  args.fdr = 1.5;
  CHECK(cmd_spearman(args) == kExitConfig);
}

TEST_CASE("cmd_simulate is deterministic for a fixed manifest") {
  auto dir = temp_dir("simulate");
  std::string manifest = (dir / "tiny.conf").string();
  write_text_atomic(manifest,
                    "mode = highdim\n"
                    "name = tiny\n"
                    "n_subjects = 40\n"
                    "n_taxa = 10\n"
                    "n_covariates = 4\n"
                    "n_active_covariates = 1\n"
                    "taxa_per_active_covariate = 2\n"
                    "beta_low = 4\n"
                    "beta_high = 7\n"
                    "snr = 4.5\n"
                    "presence_probability = 1\n"
                    "penalty = lasso\n"
                    "cv_folds = 4\n"
                    "grid_size = 15\n"
                    "n_replicates = 2\n"
                    "seed = 7\n");

  SimulateArgs args;
  args.manifest_path = manifest;
  args.out_dir = (dir / "run1").string();
  REQUIRE(cmd_simulate(args) == kExitOk);
  std::string metrics = read_file(args.out_dir + "/tiny_metrics.tsv");
  std::string replicates = read_file(args.out_dir + "/tiny_replicates.tsv");
  CHECK(metrics.find("recall_mean") != std::string::npos);
  CHECK(count_data_rows(replicates) == 2);

  SimulateArgs again = args;
  again.out_dir = (dir / "run2").string();
  REQUIRE(cmd_simulate(again) == kExitOk);
  CHECK(read_file(again.out_dir + "/tiny_metrics.tsv") == metrics);
  CHECK(read_file(again.out_dir + "/tiny_replicates.tsv") == replicates);

  SUBCASE("unknown manifest fields are configuration errors") {
    std::string bad = (dir / "bad.conf").string();
    write_text_atomic(bad, "mode = highdim\nbogus_field = 1\n");
    SimulateArgs broken;
    broken.manifest_path = bad;
    broken.out_dir = (dir / "broken").string();
    CHECK(cmd_simulate(broken) == kExitConfig);
  }
}

TEST_CASE("cmd_simulate runs a small low-dimensional study") {
  auto dir = temp_dir("simulate_low");
  std::string manifest = (dir / "low.conf").string();
  write_text_atomic(manifest,
                    "mode = lowdim\n"
                    "n_subjects = 120\n"
                    "n_taxa = 4\n"
                    "n_covariates = 1\n"
                    "intercept_value = -0.1\n"
                    "slope_value = 0.8\n"
                    "outcome_sd = 1\n"
                    "outcome_rho = 0.3\n"
                    "presence_probability = 0.7\n"
                    "n_replicates = 3\n"
                    "seed = 2\n");

  SimulateArgs args;
  args.manifest_path = manifest;
  args.out_dir = (dir / "out").string();
  REQUIRE(cmd_simulate(args) == kExitOk);
  std::string metrics = read_file(args.out_dir + "/low_metrics.tsv");
  CHECK(metrics.find("Parameter\tTrue\tAve.Bias\tAve.Percent.Bias\tAve.CP") !=
        std::string::npos);
  CHECK(count_data_rows(metrics) == 4);  // beta_00, beta_10, sd, rho
}
