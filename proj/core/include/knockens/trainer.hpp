#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "knockens/dataset.hpp"
#include "knockens/knockoff.hpp"

namespace knockens {

/// One setting per (lambda, depth) pair, enumerated lambda-major:
/// k = lambda_index * depths.size() + depth_index.
struct GridSpec {
  std::vector<double> lambdas;
  std::vector<int> depths;
  int epochs = 1;
  int folds = 5;
  int batch_size = 32;
  double learning_rate = 1e-3;
  int hidden = 25;
  double dropout_prob = 0.5;
  std::uint64_t seed = 0;

  /// Training randomness (init, dropout, batch order). Defaults to `seed`;
  /// the fold partition always derives from `seed` alone, so stability
  /// experiments can vary model_seed while holding everything else fixed.
  std::optional<std::uint64_t> model_seed;

  int setting_count() const { return static_cast<int>(lambdas.size() * depths.size()); }
  long record_count() const { return static_cast<long>(setting_count()) * epochs; }
  double lambda_of(int setting) const { return lambdas[setting / depths.size()]; }
  int depth_of(int setting) const { return depths[setting % depths.size()]; }
  std::uint64_t effective_model_seed() const { return model_seed.value_or(seed); }

  void validate() const;
};

struct SettingInfo {
  int index = 0;
  double lambda = 0.0;
  int depth = 1;
  bool failed = false;
};

/// One (setting, epoch) snapshot of the training path. Epochs are 1-based.
struct TrajectoryRecord {
  int setting = 0;
  int epoch = 1;
  double cv_loss = 0.0;
  Eigen::VectorXd z;  // length (1+M)*p
};

/// Complete grid of records in (setting asc, epoch asc) order; failed
/// settings are excluded entirely (all-or-nothing per setting).
class TrajectoryStore {
public:
  TrajectoryStore() = default;
  TrajectoryStore(std::vector<SettingInfo> settings, std::vector<TrajectoryRecord> records,
                  int epochs, Eigen::Index z_dim);

  const std::vector<SettingInfo>& settings() const { return settings_; }
  const std::vector<TrajectoryRecord>& records() const { return records_; }
  long record_count() const { return static_cast<long>(records_.size()); }
  int epochs() const { return epochs_; }
  Eigen::Index z_dim() const { return z_dim_; }
  bool empty() const { return records_.empty(); }

  /// Records stacked row-wise, in stored order.
  Eigen::MatrixXd z_matrix() const;

  /// manifest JSON plus one CSV per setting (epoch, cv_loss, z_1..z_d).
  void save(const std::filesystem::path& dir) const;
  /// Manifest only; pairs with run_grid's resume_dir, which already wrote the
  /// per-setting CSVs as they completed.
  void save_manifest(const std::filesystem::path& dir) const;
  static TrajectoryStore load(const std::filesystem::path& dir);

private:
  std::vector<SettingInfo> settings_;
  std::vector<TrajectoryRecord> records_;
  int epochs_ = 0;
  Eigen::Index z_dim_ = 0;
};

struct BestModel {
  int setting = 0;
  int epoch = 1;
  double cv_loss = 0.0;
  Eigen::VectorXd z;
};

/// Deterministic fold assignment from `seed`; stratified by class when the
/// task is binary. Returns fold index per sample, each in [0, folds).
std::vector<int> fold_assignments(const Eigen::VectorXd& y, Task task, int folds,
                                  std::uint64_t seed);

struct RunGridOptions {
  int workers = 1;
  /// When set: settings whose per-setting CSV already exists under this
  /// directory are loaded instead of retrained, and fresh results are
  /// written as they complete.
  std::optional<std::filesystem::path> resume_dir;
  /// Receives warning lines (failed settings). Defaults to stderr.
  std::function<void(const std::string&)> warn;
};

/// For every setting trains `folds` fold models and one full-data model for
/// `epochs` epochs in lockstep. cv_loss(e) is the mean across folds of the
/// held-out data-fit loss after epoch e; Z(e) is the input-gradient
/// importance of the full-data model after epoch e, over all rows.
/// A setting hitting a non-finite loss is dropped with a warning; all
/// settings failing is an error.
TrajectoryStore run_grid(const Dataset& dataset, const KnockoffAugmentedData& augmented,
                         const GridSpec& grid, const RunGridOptions& options = {});

/// Record minimizing cv_loss; ties broken by (lower setting, lower epoch).
BestModel best_cv_model(const TrajectoryStore& store);

}  // namespace knockens
