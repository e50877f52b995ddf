#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "knockens/config.hpp"
#include "knockens/metrics.hpp"
#include "knockens/selection.hpp"

namespace knockens {

/// One row per (amplitude, replicate, strategy).
struct ReplicateRow {
  double amplitude = 0.0;  // 0 for CSV mode
  int replicate = 0;
  std::string strategy;
  int n_selected = 0;
  double power = 0.0;  // NaN when no ground truth
  double fdp = 0.0;    // NaN when no ground truth
};

struct StrategyAggregate {
  double amplitude = 0.0;
  std::string strategy;
  int replicates = 0;
  double mean_power = 0.0;
  double mean_fdp = 0.0;
  double mean_selected = 0.0;
};

struct ExperimentResult {
  std::vector<ReplicateRow> rows;
  std::vector<StrategyAggregate> aggregates;
};

/// Per replicate: fresh dataset (derived seed), knockoffs, grid training,
/// one selection per strategy, metrics; artifacts persisted under
/// out_dir/amp_<A>/rep_<i>/. Aggregation is the mean across replicates per
/// (amplitude, strategy). Writes replicates.csv and aggregate.csv.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

struct StabilityStrategyReport {
  std::string strategy;
  std::vector<double> jaccard_pairs;  // C(n_repeats, 2) values, pair order (i<j)
  double median_jaccard = 0.0;
  InstabilityProfile instability;     // across repeats, over the full Z vector
};

struct StabilityResult {
  int n_repeats = 0;
  std::vector<StabilityStrategyReport> strategies;
};

/// Repeats train+select with different model seeds on one replicate's data
/// and knockoffs (first amplitude). Writes stability_jaccard.csv and
/// stability_instability.csv under out_dir.
StabilityResult stability_experiment(const ExperimentConfig& cfg, int n_repeats);

/// Seed stream for (amplitude cell, replicate); shared by run_experiment and
/// the staged CLI entry points so a staged run reproduces pipeline replicate 0.
std::uint64_t replicate_seed(const ExperimentConfig& cfg, std::size_t amplitude_index,
                             int replicate);

/// Single-replicate stages operating on the canonical files in `dir`; each
/// reads what the previous one wrote.
void stage_data(const ExperimentConfig& cfg, const std::filesystem::path& dir);
void stage_knockoffs(const ExperimentConfig& cfg, const std::filesystem::path& dir);
void stage_train(const ExperimentConfig& cfg, const std::filesystem::path& dir);
void stage_ensemble(const ExperimentConfig& cfg, const std::filesystem::path& dir);
void stage_select(const ExperimentConfig& cfg, const std::filesystem::path& dir);
void stage_evaluate(const ExperimentConfig& cfg, const std::filesystem::path& dir);

/// Paths of the canonical artifacts inside an output directory; the CLI
/// stages communicate through these.
struct ArtifactPaths {
  std::filesystem::path dir;
  std::filesystem::path data_csv() const { return dir / "data.csv"; }
  std::filesystem::path data_meta() const { return dir / "data_meta.json"; }
  std::filesystem::path knockoff_model() const { return dir / "knockoff_model.json"; }
  std::filesystem::path augmented_csv() const { return dir / "augmented.csv"; }
  std::filesystem::path trajectories() const { return dir / "trajectories"; }
  std::filesystem::path ensemble_csv(const std::string& name) const {
    return dir / ("ensemble_" + name + ".csv");
  }
  std::filesystem::path ensemble_meta(const std::string& name) const {
    return dir / ("ensemble_" + name + ".json");
  }
  std::filesystem::path selection(const std::string& name) const {
    return dir / ("selection_" + name + ".json");
  }
  std::filesystem::path metrics_csv() const { return dir / "metrics.csv"; }
};

}  // namespace knockens
