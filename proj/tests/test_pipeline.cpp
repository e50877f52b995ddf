#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "knockens/errors.hpp"
#include "knockens/knockoff.hpp"
#include "knockens/pipeline.hpp"

using namespace knockens;

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Small but real end-to-end configuration: p=6, two lambdas, three epochs.
ExperimentConfig mini_config(const std::filesystem::path& out_dir) {
  ExperimentConfig cfg = profile_defaults(Profile::desk);
  cfg.sim->n = 60;
  cfg.sim->p = 6;
  cfg.sim->s = 2;
  cfg.sim->r = 2;
  cfg.amplitudes = {8.0};
  cfg.grid.lambdas = {0.0, 1e-3};
  cfg.grid.depths = {1};
  cfg.grid.epochs = 3;
  cfg.grid.folds = 2;
  cfg.grid.hidden = 4;
  cfg.grid.batch_size = 16;
  for (auto& named : cfg.ensembles) named.spec.m = 3;
  cfg.replicates = 2;
  cfg.seed = 7;
  cfg.workers = 2;
  cfg.out_dir = out_dir;
  return cfg;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("key-value config parsing") {
  const KvConfig kv = KvConfig::parse_string(
      "# comment line\n"
      "sim.n = 250\n"
      "grid.lambdas = 0.1, 0.2, 0.3  # trailing comment\n"
      "grid.depths = 1,2\n"
      "csv.standardize = false\n"
      "name = spaced value\n");
  CHECK(kv.get_long("sim.n", 0) == 250);
  CHECK(kv.get_double_list("grid.lambdas") == std::vector<double>{0.1, 0.2, 0.3});
  CHECK(kv.get_int_list("grid.depths") == std::vector<int>{1, 2});
  CHECK(kv.get_bool("csv.standardize", true) == false);
  CHECK(kv.get_string("name") == "spaced value");
  CHECK(kv.get_long("absent", 5) == 5);
  CHECK_THROWS_AS(kv.get_string("absent"), ConfigError);
  CHECK_THROWS_AS(KvConfig::parse_string("just a line\n"), ConfigError);
  CHECK_THROWS_AS(KvConfig::parse_string("sim.n = abc\n").get_long("sim.n", 0), ConfigError);
}

TEST_CASE("profile defaults have the documented scaled/full shapes") {
  const ExperimentConfig desk = profile_defaults(Profile::desk);
  CHECK(desk.sim->p == 100);
  CHECK(desk.sim->n == 500);
  CHECK(desk.sim->s == 10);
  CHECK(desk.grid.lambdas.size() == 20);
  CHECK(desk.grid.depths == std::vector<int>{1});
  CHECK(desk.grid.epochs == 100);
  CHECK(desk.replicates == 10);
  CHECK(desk.q == 0.2);
  CHECK(desk.ensembles.size() == 4);

  const ExperimentConfig paper = profile_defaults(Profile::paper);
  CHECK(paper.sim->p == 500);
  CHECK(paper.sim->s == 25);
  CHECK(paper.grid.lambdas.size() == 100);
  CHECK(paper.grid.depths == std::vector<int>{1, 2, 3});
  CHECK(paper.grid.epochs == 300);
  CHECK(paper.amplitudes == std::vector<double>{10, 15, 20, 25, 30});
  CHECK(paper.grid.record_count() == 90000);
}

TEST_CASE("config overrides land in the right places") {
  const KvConfig kv = KvConfig::parse_string(
      "sim.p = 30\n"
      "sim.amplitudes = 5, 10\n"
      "knockoff.m = 3\n"
      "grid.lambda_count = 4\n"
      "grid.lambda_min = 1e-4\n"
      "grid.lambda_max = 1e-1\n"
      "grid.epochs = 7\n"
      "ensemble.strategies = best, top_m\n"
      "ensemble.m = 12\n"
      "select.q = 0.1\n"
      "replicates = 3\n"
      "seed = 99\n");
  const ExperimentConfig cfg = build_experiment_config(Profile::desk, kv);
  CHECK(cfg.sim->p == 30);
  CHECK(cfg.amplitudes == std::vector<double>{5, 10});
  CHECK(cfg.knockoff_copies == 3);
  CHECK(cfg.grid.lambdas.size() == 4);
  CHECK(cfg.grid.lambdas.front() == doctest::Approx(1e-4));
  CHECK(cfg.grid.lambdas.back() == doctest::Approx(1e-1));
  CHECK(cfg.grid.epochs == 7);
  CHECK(cfg.ensembles.size() == 2);
  CHECK(cfg.ensembles[0].name == "best");
  CHECK(cfg.ensembles[1].spec.m == 12);
  CHECK(cfg.q == 0.1);
  CHECK(cfg.replicates == 3);
  CHECK(cfg.seed == 99);
}

TEST_CASE("a minimal experiment produces one report per strategy and replicate") {
  const auto dir = fresh_dir("knockens_mini_exp");
  ExperimentConfig cfg = mini_config(dir);
  cfg.replicates = 1;
  cfg.ensembles.resize(1);  // best only
  const ExperimentResult result = run_experiment(cfg);
  CHECK(result.rows.size() == 1);
  CHECK(result.aggregates.size() == 1);
  CHECK(std::filesystem::exists(dir / "replicates.csv"));
  CHECK(std::filesystem::exists(dir / "aggregate.csv"));
  const ArtifactPaths rep{dir / "amp_8" / "rep_0"};
  CHECK(std::filesystem::exists(rep.data_csv()));
  CHECK(std::filesystem::exists(rep.knockoff_model()));
  CHECK(std::filesystem::exists(rep.augmented_csv()));
  CHECK(std::filesystem::exists(rep.trajectories() / "manifest.json"));
  CHECK(std::filesystem::exists(rep.ensemble_csv("best")));
  CHECK(std::filesystem::exists(rep.selection("best")));
  CHECK(std::filesystem::exists(rep.metrics_csv()));
  std::filesystem::remove_all(dir);
}

TEST_CASE("full mini experiment: row/aggregate shape and value ranges") {
  const auto dir = fresh_dir("knockens_mini_full");
  const ExperimentConfig cfg = mini_config(dir);
  const ExperimentResult result = run_experiment(cfg);
  CHECK(result.rows.size() == 2 * 4);  // replicates x strategies
  CHECK(result.aggregates.size() == 4);
  for (const auto& row : result.rows) {
    CHECK(row.power >= 0.0);
    CHECK(row.power <= 1.0);
    CHECK(row.fdp >= 0.0);
    CHECK(row.fdp <= 1.0);
  }
  // aggregates equal the mean of their rows (exchangeable reduce)
  for (const auto& agg : result.aggregates) {
    double sum = 0.0;
    int count = 0;
    for (const auto& row : result.rows)
      if (row.strategy == agg.strategy) {
        sum += row.power;
        ++count;
      }
    CHECK(count == agg.replicates);
    CHECK(agg.mean_power == doctest::Approx(sum / count));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("identical config and seed give byte-identical outputs") {
  const auto dir_a = fresh_dir("knockens_det_a");
  const auto dir_b = fresh_dir("knockens_det_b");
  run_experiment(mini_config(dir_a));
  run_experiment(mini_config(dir_b));
  CHECK(slurp(dir_a / "replicates.csv") == slurp(dir_b / "replicates.csv"));
  CHECK(slurp(dir_a / "aggregate.csv") == slurp(dir_b / "aggregate.csv"));
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}

TEST_CASE("an amplitude sweep yields the amplitudes-by-strategies table") {
  const auto dir = fresh_dir("knockens_sweep");
  ExperimentConfig cfg = mini_config(dir);
  cfg.replicates = 1;
  cfg.grid.epochs = 2;
  cfg.amplitudes = {10, 15, 20, 25, 30};
  const ExperimentResult result = run_experiment(cfg);
  CHECK(result.aggregates.size() == 5 * 4);
  // every (amplitude, strategy) cell is present with power and FDR entries
  for (double amp : cfg.amplitudes)
    for (const auto& named : cfg.ensembles) {
      const auto it = std::find_if(result.aggregates.begin(), result.aggregates.end(),
                                   [&](const StrategyAggregate& agg) {
                                     return agg.amplitude == amp && agg.strategy == named.name;
                                   });
      REQUIRE(it != result.aggregates.end());
      CHECK(std::isfinite(it->mean_power));
      CHECK(std::isfinite(it->mean_fdp));
    }
  std::filesystem::remove_all(dir);
}

TEST_CASE("csv mode runs the multiple-knockoff path without ground truth") {
  const auto dir = fresh_dir("knockens_csvmode");
  const auto csv_path = dir / "input.csv";
  {
    std::ofstream out(csv_path);
    out << "f1,f2,f3,y\n";
    std::mt19937_64 rng(5);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < 50; ++i) {
      const double f1 = normal(rng), f2 = normal(rng), f3 = normal(rng);
      out << f1 << ',' << f2 << ',' << f3 << ',' << (f1 + normal(rng) > 0 ? 1 : 0) << '\n';
    }
  }
  ExperimentConfig cfg = mini_config(dir);
  cfg.sim.reset();
  cfg.amplitudes.clear();
  CsvSource csv;
  csv.path = csv_path;
  csv.response_column = "y";
  csv.standardize = true;
  cfg.csv = csv;
  cfg.knockoff_copies = 2;
  cfg.replicates = 1;
  cfg.grid.epochs = 2;

  const ExperimentResult result = run_experiment(cfg);
  CHECK(result.rows.size() == 4);
  for (const auto& row : result.rows) CHECK(std::isnan(row.power));
  for (const auto& agg : result.aggregates) CHECK(std::isnan(agg.mean_power));

  // kappa/tau statistics present in the multiple-knockoff reports
  const ArtifactPaths rep{dir / "rep_0"};
  const SelectionReport report = load_selection_report(rep.selection("best"));
  CHECK(report.copies == 2);
  CHECK(report.stats.kappa.has_value());
  std::filesystem::remove_all(dir);
}

TEST_CASE("staged CLI entry points reproduce pipeline replicate 0") {
  const auto pipe_dir = fresh_dir("knockens_staged_pipe");
  const auto staged_dir = fresh_dir("knockens_staged_steps");
  ExperimentConfig cfg = mini_config(pipe_dir);
  cfg.replicates = 1;
  run_experiment(cfg);

  cfg.out_dir = staged_dir;
  stage_data(cfg, staged_dir);
  stage_knockoffs(cfg, staged_dir);
  stage_train(cfg, staged_dir);
  stage_ensemble(cfg, staged_dir);
  stage_select(cfg, staged_dir);
  stage_evaluate(cfg, staged_dir);

  const auto rep0 = pipe_dir / "amp_8" / "rep_0";
  for (const std::string name : {"best", "avg", "top_m", "m_influential"})
    CHECK(slurp(staged_dir / ("selection_" + name + ".json")) ==
          slurp(rep0 / ("selection_" + name + ".json")));
  CHECK(slurp(staged_dir / "metrics.csv") == slurp(rep0 / "metrics.csv"));
  std::filesystem::remove_all(pipe_dir);
  std::filesystem::remove_all(staged_dir);
}

TEST_CASE("stability: five repeats give ten jaccard pairs per strategy") {
  const auto dir = fresh_dir("knockens_stability_shape");
  ExperimentConfig cfg = mini_config(dir);
  cfg.grid.lambdas = {1e-4};
  cfg.grid.epochs = 2;
  for (auto& named : cfg.ensembles) named.spec.m = 2;
  const StabilityResult result = stability_experiment(cfg, 5);
  CHECK(result.n_repeats == 5);
  REQUIRE(result.strategies.size() == 4);
  for (const auto& report : result.strategies) {
    CHECK(report.jaccard_pairs.size() == 10);  // C(5,2)
    for (double j : report.jaccard_pairs) {
      CHECK(j >= 0.0);
      CHECK(j <= 1.0);
    }
    CHECK(report.instability.instability.size() == 2 * 6);
  }
  CHECK(std::filesystem::exists(dir / "stability_jaccard.csv"));
  CHECK(std::filesystem::exists(dir / "stability_summary.csv"));
  CHECK_THROWS_AS(stability_experiment(cfg, 1), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("identical model seeds mean identical selections (jaccard 1)") {
  const auto dir = fresh_dir("knockens_stability_det");
  ExperimentConfig cfg = mini_config(dir);
  cfg.grid.lambdas = {1e-4};
  cfg.grid.epochs = 2;
  cfg.grid.dropout_prob = 0.0;
  for (auto& named : cfg.ensembles) named.spec.m = 2;

  // run one replicate twice with a pinned model seed: no randomness remains
  SimConfig sim = *cfg.sim;
  sim.amplitude = cfg.amplitudes.front();
  sim.seed = 123;
  const Dataset ds = simulate(sim);
  const KnockoffModel model = fit_gaussian_model(ds.X, 1);
  const auto aug = sample_single_knockoffs(ds.X, model, 5);
  GridSpec grid = cfg.grid;
  grid.seed = 17;
  grid.model_seed = 777;
  const TrajectoryStore store_a = run_grid(ds, aug, grid);
  const TrajectoryStore store_b = run_grid(ds, aug, grid);

  for (const auto& named : cfg.ensembles) {
    EnsembleSpec spec = named.spec;
    spec.seed = 31;
    const auto za = build_ensemble(store_a, spec).z;
    const auto zb = build_ensemble(store_b, spec).z;
    const auto sa = select_features(single_knockoff_stats(za), cfg.q);
    const auto sb = select_features(single_knockoff_stats(zb), cfg.q);
    CHECK(jaccard(sa.selected, sb.selected) == 1.0);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("experiment validation rejects inconsistent configs") {
  ExperimentConfig cfg = profile_defaults(Profile::desk);
  cfg.q = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = profile_defaults(Profile::desk);
  cfg.replicates = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = profile_defaults(Profile::desk);
  cfg.sim.reset();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = profile_defaults(Profile::desk);
  cfg.ensembles.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

}  // TEST_SUITE
