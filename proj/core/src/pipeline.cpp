#include "knockens/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include "knockens/csv.hpp"
#include "knockens/errors.hpp"
#include "knockens/knockoff.hpp"
#include "knockens/rng.hpp"

namespace knockens {

namespace {

// salts for the per-replicate seed streams
constexpr std::uint64_t kDataSalt = 1;
constexpr std::uint64_t kKnockoffSalt = 2;
constexpr std::uint64_t kGridSalt = 3;
constexpr std::uint64_t kEnsembleSalt = 4;
constexpr std::uint64_t kRepeatSalt = 5;

void standardize_response_inplace(Dataset& ds) {
  if (ds.task != Task::regression) return;
  const Eigen::Index n = ds.y.size();
  const double mean = ds.y.mean();
  const double var = (ds.y.array() - mean).square().sum() / double(n - 1);
  if (var <= 0.0) throw DataError("response is constant; cannot standardize");
  ds.y = (ds.y.array() - mean) / std::sqrt(var);
}

KnockoffAugmentedData make_knockoffs(const Dataset& ds, int copies, std::uint64_t seed) {
  const KnockoffModel model = fit_gaussian_model(ds.X, copies);
  return copies == 1 ? sample_single_knockoffs(ds.X, model, seed)
                     : sample_scit_knockoffs(ds.X, model, seed);
}

FeatureStats make_stats(const Eigen::VectorXd& z, int copies) {
  return copies == 1 ? single_knockoff_stats(z) : multiple_knockoff_stats(z, copies);
}

struct ReplicateArtifacts {
  Dataset dataset;
  KnockoffAugmentedData augmented;
  TrajectoryStore store;
};

/// Data, knockoffs and grid training for one replicate. `persist_dir`, when
/// set, receives the canonical artifact files.
ReplicateArtifacts run_replicate(const ExperimentConfig& cfg, const Dataset* fixed_data,
                                 double amplitude, std::uint64_t rep_seed,
                                 std::optional<std::uint64_t> model_seed,
                                 const std::optional<std::filesystem::path>& persist_dir) {
  ReplicateArtifacts art;
  const std::uint64_t data_seed = derive_seed(rep_seed, kDataSalt);
  if (fixed_data) {
    art.dataset = *fixed_data;
  } else {
    SimConfig sim = *cfg.sim;
    sim.amplitude = amplitude;
    sim.seed = data_seed;
    art.dataset = simulate(sim);
  }
  if (cfg.standardize_response) standardize_response_inplace(art.dataset);

  art.augmented =
      make_knockoffs(art.dataset, cfg.knockoff_copies, derive_seed(rep_seed, kKnockoffSalt));

  GridSpec grid = cfg.grid;
  grid.seed = derive_seed(rep_seed, kGridSalt);
  grid.model_seed = model_seed;

  RunGridOptions options;
  options.workers = cfg.workers;
  if (persist_dir) {
    std::filesystem::create_directories(*persist_dir);
    ArtifactPaths paths{*persist_dir};
    save_dataset(art.dataset, paths.data_csv(), paths.data_meta(), data_seed);
    save_knockoff_model(art.augmented.model, paths.knockoff_model());
    save_augmented_csv(art.augmented, paths.augmented_csv());
    options.resume_dir = paths.trajectories();
  }

  art.store = run_grid(art.dataset, art.augmented, grid, options);
  if (persist_dir) art.store.save_manifest(ArtifactPaths{*persist_dir}.trajectories());
  return art;
}

struct StrategyOutcome {
  std::string strategy;
  EnsembleResult ensemble;
  SelectionReport report;
};

std::vector<StrategyOutcome> select_all_strategies(
    const ExperimentConfig& cfg, const ReplicateArtifacts& art, std::uint64_t rep_seed,
    const std::optional<std::filesystem::path>& persist_dir) {
  std::vector<StrategyOutcome> outcomes;
  for (std::size_t i = 0; i < cfg.ensembles.size(); ++i) {
    const auto& named = cfg.ensembles[i];
    EnsembleSpec spec = named.spec;
    spec.seed = derive_seed(rep_seed, kEnsembleSalt, i);
    try {
      StrategyOutcome outcome;
      outcome.strategy = named.name;
      outcome.ensemble = build_ensemble(art.store, spec);
      const FeatureStats stats = make_stats(outcome.ensemble.z, cfg.knockoff_copies);
      const SelectionResult sel = select_features(stats, cfg.q);
      outcome.report = {cfg.q,         cfg.knockoff_copies, sel.threshold,
                        sel.selected,  stats,               named.name};
      if (persist_dir) {
        ArtifactPaths paths{*persist_dir};
        save_ensemble(outcome.ensemble, spec, paths.ensemble_csv(named.name),
                      paths.ensemble_meta(named.name));
        save_selection_report(outcome.report, paths.selection(named.name));
      }
      outcomes.push_back(std::move(outcome));
    } catch (const Error& e) {
      rethrow_with_context(e, "strategy " + named.name);
    }
  }
  return outcomes;
}

std::string amplitude_dir(double amplitude) { return "amp_" + format_double(amplitude); }

Dataset load_source_data(const ExperimentConfig& cfg, std::uint64_t rep_seed) {
  Dataset ds;
  if (cfg.sim) {
    SimConfig sim = *cfg.sim;
    sim.amplitude = cfg.amplitudes.front();
    sim.seed = derive_seed(rep_seed, kDataSalt);
    ds = simulate(sim);
  } else {
    CsvLoadOptions options;
    options.response_column = cfg.csv->response_column;
    options.covariate_columns = cfg.csv->covariate_columns;
    options.standardize = cfg.csv->standardize;
    ds = load_csv(cfg.csv->path, options);
  }
  if (cfg.standardize_response) standardize_response_inplace(ds);
  return ds;
}

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

void write_rows_csv(const std::filesystem::path& path, const std::vector<ReplicateRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "amplitude,replicate,strategy,n_selected,power,fdp\n";
  for (const auto& row : rows) {
    out << format_double(row.amplitude) << ',' << row.replicate << ',' << row.strategy << ','
        << row.n_selected << ',';
    out << (std::isnan(row.power) ? "" : format_double(row.power)) << ',';
    out << (std::isnan(row.fdp) ? "" : format_double(row.fdp)) << '\n';
  }
}

void write_aggregate_csv(const std::filesystem::path& path,
                         const std::vector<StrategyAggregate>& aggregates) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "amplitude,strategy,replicates,mean_power,mean_fdp,mean_selected\n";
  for (const auto& agg : aggregates) {
    out << format_double(agg.amplitude) << ',' << agg.strategy << ',' << agg.replicates << ',';
    out << (std::isnan(agg.mean_power) ? "" : format_double(agg.mean_power)) << ',';
    out << (std::isnan(agg.mean_fdp) ? "" : format_double(agg.mean_fdp)) << ',';
    out << format_double(agg.mean_selected) << '\n';
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);

  const bool sim_mode = cfg.sim.has_value();
  std::optional<Dataset> fixed_data;
  if (!sim_mode) {
    CsvLoadOptions options;
    options.response_column = cfg.csv->response_column;
    options.covariate_columns = cfg.csv->covariate_columns;
    options.standardize = cfg.csv->standardize;
    fixed_data = load_csv(cfg.csv->path, options);
  }
  const std::vector<double> amplitudes = sim_mode ? cfg.amplitudes : std::vector<double>{0.0};

  ExperimentResult result;
  for (std::size_t a = 0; a < amplitudes.size(); ++a) {
    const double amplitude = amplitudes[a];
    std::vector<std::vector<StrategyOutcome>> per_replicate;

    for (int rep = 0; rep < cfg.replicates; ++rep) {
      const std::uint64_t rep_seed = derive_seed(cfg.seed, a, static_cast<std::uint64_t>(rep));
      std::optional<std::filesystem::path> rep_dir;
      if (cfg.keep_artifacts) {
        rep_dir = cfg.out_dir;
        if (sim_mode) *rep_dir /= amplitude_dir(amplitude);
        *rep_dir /= "rep_" + std::to_string(rep);
      }
      try {
        const ReplicateArtifacts art = run_replicate(
            cfg, fixed_data ? &*fixed_data : nullptr, amplitude, rep_seed, std::nullopt, rep_dir);
        auto outcomes = select_all_strategies(cfg, art, rep_seed, rep_dir);

        std::vector<std::string> metrics_lines;
        for (const auto& outcome : outcomes) {
          ReplicateRow row;
          row.amplitude = amplitude;
          row.replicate = rep;
          row.strategy = outcome.strategy;
          row.n_selected = static_cast<int>(outcome.report.selected.size());
          const bool has_truth =
              art.dataset.true_support && !art.dataset.true_support->empty();
          if (has_truth) {
            const PowerFdp pf = power_fdp(outcome.report.selected, *art.dataset.true_support);
            row.power = pf.power;
            row.fdp = pf.fdp;
          } else {
            row.power = std::numeric_limits<double>::quiet_NaN();
            row.fdp = std::numeric_limits<double>::quiet_NaN();
          }
          result.rows.push_back(row);
          metrics_lines.push_back(
              row.strategy + "," + std::to_string(row.n_selected) + "," +
              (std::isnan(row.power) ? "" : format_double(row.power)) + "," +
              (std::isnan(row.fdp) ? "" : format_double(row.fdp)));
        }
        if (rep_dir) {
          std::ofstream metrics(ArtifactPaths{*rep_dir}.metrics_csv());
          metrics << "strategy,n_selected,power,fdp\n";
          for (const auto& line : metrics_lines) metrics << line << '\n';
        }
        per_replicate.push_back(std::move(outcomes));
      } catch (const Error& e) {
        rethrow_with_context(e, (sim_mode ? "amplitude " + format_double(amplitude) + ", " : "") +
                                    "replicate " + std::to_string(rep));
      }
    }

    for (std::size_t i = 0; i < cfg.ensembles.size(); ++i) {
      StrategyAggregate agg;
      agg.amplitude = amplitude;
      agg.strategy = cfg.ensembles[i].name;
      agg.replicates = cfg.replicates;
      double power_sum = 0.0, fdp_sum = 0.0, sel_sum = 0.0;
      bool has_truth = true;
      for (const auto& row : result.rows) {
        if (row.amplitude != amplitude || row.strategy != agg.strategy) continue;
        sel_sum += row.n_selected;
        if (std::isnan(row.power)) has_truth = false;
        else {
          power_sum += row.power;
          fdp_sum += row.fdp;
        }
      }
      agg.mean_selected = sel_sum / cfg.replicates;
      agg.mean_power = has_truth ? power_sum / cfg.replicates
                                 : std::numeric_limits<double>::quiet_NaN();
      agg.mean_fdp = has_truth ? fdp_sum / cfg.replicates
                               : std::numeric_limits<double>::quiet_NaN();
      result.aggregates.push_back(agg);
    }
  }

  write_rows_csv(cfg.out_dir / "replicates.csv", result.rows);
  write_aggregate_csv(cfg.out_dir / "aggregate.csv", result.aggregates);
  return result;
}

StabilityResult stability_experiment(const ExperimentConfig& cfg, int n_repeats) {
  cfg.validate();
  if (n_repeats < 2) throw ConfigError("stability experiment needs n_repeats >= 2");
  std::filesystem::create_directories(cfg.out_dir);

  const bool sim_mode = cfg.sim.has_value();
  std::optional<Dataset> fixed_data;
  if (!sim_mode) {
    CsvLoadOptions options;
    options.response_column = cfg.csv->response_column;
    options.covariate_columns = cfg.csv->covariate_columns;
    options.standardize = cfg.csv->standardize;
    fixed_data = load_csv(cfg.csv->path, options);
  }
  const double amplitude = sim_mode ? cfg.amplitudes.front() : 0.0;
  const std::uint64_t rep_seed = derive_seed(cfg.seed, 0, 0);

  // per repeat: identical data and knockoffs, a fresh model seed
  std::vector<std::vector<StrategyOutcome>> outcomes_by_repeat;
  for (int r = 0; r < n_repeats; ++r) {
    std::optional<std::filesystem::path> repeat_dir;
    if (cfg.keep_artifacts)
      repeat_dir = cfg.out_dir / "stability" / ("repeat_" + std::to_string(r));
    try {
      const ReplicateArtifacts art =
          run_replicate(cfg, fixed_data ? &*fixed_data : nullptr, amplitude, rep_seed,
                        derive_seed(rep_seed, kRepeatSalt, static_cast<std::uint64_t>(r)),
                        repeat_dir);
      outcomes_by_repeat.push_back(select_all_strategies(cfg, art, rep_seed, repeat_dir));
    } catch (const Error& e) {
      rethrow_with_context(e, "stability repeat " + std::to_string(r));
    }
  }

  StabilityResult result;
  result.n_repeats = n_repeats;
  for (std::size_t i = 0; i < cfg.ensembles.size(); ++i) {
    StabilityStrategyReport report;
    report.strategy = cfg.ensembles[i].name;
    for (int r1 = 0; r1 < n_repeats; ++r1)
      for (int r2 = r1 + 1; r2 < n_repeats; ++r2)
        report.jaccard_pairs.push_back(jaccard(outcomes_by_repeat[r1][i].report.selected,
                                               outcomes_by_repeat[r2][i].report.selected));
    report.median_jaccard = median(report.jaccard_pairs);

    Eigen::MatrixXd z_runs(n_repeats, outcomes_by_repeat[0][i].ensemble.z.size());
    for (int r = 0; r < n_repeats; ++r)
      z_runs.row(r) = outcomes_by_repeat[r][i].ensemble.z.transpose();
    report.instability = instability_profile(z_runs);
    result.strategies.push_back(std::move(report));
  }

  {
    std::ofstream out(cfg.out_dir / "stability_jaccard.csv");
    if (!out) throw IoError("cannot write stability_jaccard.csv");
    out << "strategy,repeat_a,repeat_b,jaccard\n";
    for (std::size_t i = 0; i < result.strategies.size(); ++i) {
      std::size_t pair = 0;
      for (int r1 = 0; r1 < n_repeats; ++r1)
        for (int r2 = r1 + 1; r2 < n_repeats; ++r2, ++pair)
          out << result.strategies[i].strategy << ',' << r1 << ',' << r2 << ','
              << format_double(result.strategies[i].jaccard_pairs[pair]) << '\n';
    }
  }
  {
    std::ofstream out(cfg.out_dir / "stability_instability.csv");
    if (!out) throw IoError("cannot write stability_instability.csv");
    out << "strategy,feature,instability,signal_strength\n";
    for (const auto& report : result.strategies)
      for (Eigen::Index j = 0; j < report.instability.instability.size(); ++j)
        out << report.strategy << ',' << (j + 1) << ','
            << format_double(report.instability.instability(j)) << ','
            << format_double(report.instability.signal_strength(j)) << '\n';
  }
  {
    std::ofstream out(cfg.out_dir / "stability_summary.csv");
    if (!out) throw IoError("cannot write stability_summary.csv");
    out << "strategy,median_jaccard\n";
    for (const auto& report : result.strategies)
      out << report.strategy << ',' << format_double(report.median_jaccard) << '\n';
  }
  return result;
}

std::uint64_t replicate_seed(const ExperimentConfig& cfg, std::size_t amplitude_index,
                             int replicate) {
  return derive_seed(cfg.seed, amplitude_index, static_cast<std::uint64_t>(replicate));
}

void stage_data(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::uint64_t rep_seed = replicate_seed(cfg, 0, 0);
  const Dataset ds = load_source_data(cfg, rep_seed);
  ArtifactPaths paths{dir};
  save_dataset(ds, paths.data_csv(), paths.data_meta(), derive_seed(rep_seed, kDataSalt));
}

void stage_knockoffs(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  ArtifactPaths paths{dir};
  const Dataset ds = load_dataset(paths.data_csv(), paths.data_meta());
  const std::uint64_t rep_seed = replicate_seed(cfg, 0, 0);
  const KnockoffAugmentedData aug =
      make_knockoffs(ds, cfg.knockoff_copies, derive_seed(rep_seed, kKnockoffSalt));
  save_knockoff_model(aug.model, paths.knockoff_model());
  save_augmented_csv(aug, paths.augmented_csv());
}

void stage_train(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  ArtifactPaths paths{dir};
  const Dataset ds = load_dataset(paths.data_csv(), paths.data_meta());
  const KnockoffAugmentedData aug =
      load_augmented(paths.augmented_csv(), paths.knockoff_model());

  GridSpec grid = cfg.grid;
  grid.seed = derive_seed(replicate_seed(cfg, 0, 0), kGridSalt);

  RunGridOptions options;
  options.workers = cfg.workers;
  options.resume_dir = paths.trajectories();  // completed settings are skipped
  const TrajectoryStore store = run_grid(ds, aug, grid, options);
  store.save_manifest(paths.trajectories());
}

void stage_ensemble(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  ArtifactPaths paths{dir};
  const TrajectoryStore store = TrajectoryStore::load(paths.trajectories());
  const std::uint64_t rep_seed = replicate_seed(cfg, 0, 0);
  for (std::size_t i = 0; i < cfg.ensembles.size(); ++i) {
    const auto& named = cfg.ensembles[i];
    EnsembleSpec spec = named.spec;
    spec.seed = derive_seed(rep_seed, kEnsembleSalt, i);
    const EnsembleResult result = build_ensemble(store, spec);
    save_ensemble(result, spec, paths.ensemble_csv(named.name), paths.ensemble_meta(named.name));
  }
}

void stage_select(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  ArtifactPaths paths{dir};
  for (const auto& named : cfg.ensembles) {
    const Eigen::VectorXd z = load_ensemble_csv(paths.ensemble_csv(named.name));
    const FeatureStats stats = make_stats(z, cfg.knockoff_copies);
    const SelectionResult sel = select_features(stats, cfg.q);
    SelectionReport report{cfg.q,        cfg.knockoff_copies, sel.threshold,
                           sel.selected, stats,               named.name};
    save_selection_report(report, paths.selection(named.name));
  }
}

void stage_evaluate(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  ArtifactPaths paths{dir};
  const Dataset ds = load_dataset(paths.data_csv(), paths.data_meta());
  const bool has_truth = ds.true_support && !ds.true_support->empty();

  std::ofstream out(paths.metrics_csv());
  if (!out) throw IoError("cannot write " + paths.metrics_csv().string());
  out << "strategy,n_selected,power,fdp\n";
  for (const auto& named : cfg.ensembles) {
    const SelectionReport report = load_selection_report(paths.selection(named.name));
    out << named.name << ',' << report.selected.size() << ',';
    if (has_truth) {
      const PowerFdp pf = power_fdp(report.selected, *ds.true_support);
      out << format_double(pf.power) << ',' << format_double(pf.fdp);
    } else {
      out << ',';
    }
    out << '\n';
  }
}

}  // namespace knockens
