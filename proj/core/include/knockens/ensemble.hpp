#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "knockens/trainer.hpp"

namespace knockens {

enum class EnsembleStrategy { best, avg, top_m, m_influential };

std::string strategy_name(EnsembleStrategy s);
EnsembleStrategy strategy_from_name(const std::string& name);

struct EnsembleSpec {
  EnsembleStrategy strategy = EnsembleStrategy::best;
  int m = 1;  // used by top_m and m_influential
  /// Keep only the records in the lowest-q% of CV loss before leveraging
  /// (m_influential only). q in (0, 100].
  std::optional<double> percentile_filter;
  std::uint64_t seed = 0;
};

/// Elementwise mean of every record's Z.
Eigen::VectorXd average_all(const TrajectoryStore& store);

/// Mean of the m records with smallest cv_loss; ties kept in (setting, epoch)
/// order.
Eigen::VectorXd top_m_average(const TrajectoryStore& store, int m);

/// Leverage h_i = squared row norm of a thin orthonormal basis U of the
/// column space of z_matrix (SVD; singular values below 1e-10 * sigma_max
/// truncated). 0 <= h_i <= 1 and sum(h) = rank.
Eigen::VectorXd leverage_scores(const Eigen::MatrixXd& z_matrix);

struct EnsembleResult {
  Eigen::VectorXd z;
  /// Store-order indices of the records that entered the mean (for best:
  /// the single argmin record; for avg: empty, meaning all).
  std::vector<int> chosen_records;
};

/// Statistical leveraging: after the optional percentile filter, sample m
/// distinct records without replacement with probability proportional to
/// their leverage (sequential draws, renormalizing), then average them.
EnsembleResult m_influential_average(const TrajectoryStore& store, int m,
                                     std::optional<double> percentile_filter,
                                     std::uint64_t seed);

EnsembleResult build_ensemble(const TrajectoryStore& store, const EnsembleSpec& spec);

/// CSV (index, z) plus JSON metadata (strategy, m, seed, chosen record ids).
void save_ensemble(const EnsembleResult& result, const EnsembleSpec& spec,
                   const std::filesystem::path& csv_path,
                   const std::filesystem::path& meta_path);

Eigen::VectorXd load_ensemble_csv(const std::filesystem::path& csv_path);

}  // namespace knockens
