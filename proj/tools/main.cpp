#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "knockens/config.hpp"
#include "knockens/errors.hpp"
#include "knockens/pipeline.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::string out_dir = "out";
  std::string profile = "desk";
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
};

void add_common_flags(CLI::App* cmd, CommonOptions* opts) {
  cmd->add_option("--config", opts->config_path, "key = value config file");
  cmd->add_option("--seed", opts->seed, "base seed (overrides the config)");
  cmd->add_option("--out-dir", opts->out_dir, "output directory");
  cmd->add_option("--workers", opts->workers, "worker threads for grid settings");
  cmd->add_option("--profile", opts->profile, "defaults profile")
      ->check(CLI::IsMember({"desk", "paper"}));
}

knockens::ExperimentConfig make_config(const CommonOptions& opts) {
  knockens::KvConfig kv;
  if (!opts.config_path.empty()) kv = knockens::KvConfig::parse_file(opts.config_path);
  knockens::ExperimentConfig cfg =
      knockens::build_experiment_config(knockens::profile_from_name(opts.profile), kv);
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.workers)
    cfg.workers = *opts.workers;
  else
    cfg.workers = std::max(1u, std::thread::hardware_concurrency());
  cfg.out_dir = opts.out_dir;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FDR-controlled feature selection with knockoffs and "
               "training-path importance ensembles"};
  app.require_subcommand(1);

  CommonOptions opts;
  int stability_repeats = 5;

  auto* cmd_simulate =
      app.add_subcommand("simulate", "generate (or ingest) the dataset artifacts");
  auto* cmd_knockoffs =
      app.add_subcommand("knockoffs", "fit the Gaussian model and sample knockoffs");
  auto* cmd_train = app.add_subcommand("train", "run the hyperparameter grid (resumable)");
  auto* cmd_ensemble =
      app.add_subcommand("ensemble", "build ensemble importance scores per strategy");
  auto* cmd_select = app.add_subcommand("select", "apply the knockoff filter per strategy");
  auto* cmd_evaluate = app.add_subcommand("evaluate", "power/FDP metrics per strategy");
  auto* cmd_pipeline =
      app.add_subcommand("pipeline", "full experiment across replicates with aggregation");
  auto* cmd_stability =
      app.add_subcommand("stability", "repeat train+select varying only model seeds");
  cmd_stability->add_option("--repeats", stability_repeats, "number of repeats")
      ->check(CLI::PositiveNumber);

  for (auto* cmd : {cmd_simulate, cmd_knockoffs, cmd_train, cmd_ensemble, cmd_select,
                    cmd_evaluate, cmd_pipeline, cmd_stability})
    add_common_flags(cmd, &opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const knockens::ExperimentConfig cfg = make_config(opts);
    if (cmd_simulate->parsed()) {
      knockens::stage_data(cfg, cfg.out_dir);
      std::cout << "dataset written to " << cfg.out_dir << '\n';
    } else if (cmd_knockoffs->parsed()) {
      knockens::stage_knockoffs(cfg, cfg.out_dir);
      std::cout << "knockoffs written to " << cfg.out_dir << '\n';
    } else if (cmd_train->parsed()) {
      knockens::stage_train(cfg, cfg.out_dir);
      std::cout << "trajectories written to " << cfg.out_dir << "/trajectories\n";
    } else if (cmd_ensemble->parsed()) {
      knockens::stage_ensemble(cfg, cfg.out_dir);
      std::cout << "ensemble scores written to " << cfg.out_dir << '\n';
    } else if (cmd_select->parsed()) {
      knockens::stage_select(cfg, cfg.out_dir);
      std::cout << "selection reports written to " << cfg.out_dir << '\n';
    } else if (cmd_evaluate->parsed()) {
      knockens::stage_evaluate(cfg, cfg.out_dir);
      std::cout << "metrics written to " << cfg.out_dir << "/metrics.csv\n";
    } else if (cmd_pipeline->parsed()) {
      const knockens::ExperimentResult result = knockens::run_experiment(cfg);
      for (const auto& agg : result.aggregates) {
        std::printf("amplitude=%g strategy=%-14s mean_power=%.4f mean_fdp=%.4f selected=%.1f\n",
                    agg.amplitude, agg.strategy.c_str(), agg.mean_power, agg.mean_fdp,
                    agg.mean_selected);
      }
      std::cout << "aggregates written to " << cfg.out_dir << "/aggregate.csv\n";
    } else if (cmd_stability->parsed()) {
      const knockens::StabilityResult result =
          knockens::stability_experiment(cfg, stability_repeats);
      for (const auto& report : result.strategies)
        std::printf("strategy=%-14s median_jaccard=%.4f\n", report.strategy.c_str(),
                    report.median_jaccard);
      std::cout << "stability reports written to " << cfg.out_dir << '\n';
    }
  } catch (const knockens::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
