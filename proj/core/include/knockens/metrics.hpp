#pragma once

#include <Eigen/Core>
#include <vector>

namespace knockens {

struct PowerFdp {
  double power = 0.0;
  double fdp = 0.0;
};

/// power = |selected ∩ true| / |true|, fdp = |selected \ true| / max(1, |selected|).
/// Index sets are 0-based and need not be sorted. Empty true_support is an error.
PowerFdp power_fdp(const std::vector<int>& selected, const std::vector<int>& true_support);

/// |A ∩ B| / |A ∪ B|; both empty -> 1.0 (identical selections).
double jaccard(const std::vector<int>& a, const std::vector<int>& b);

struct InstabilityProfile {
  Eigen::VectorXd instability;      // sample std (ddof=1) / mean, per feature
  Eigen::VectorXd signal_strength;  // mean, per feature
  std::vector<bool> zero_mean;      // instability reported as 0 where mean == 0
};

/// z_runs: R runs x p features, R >= 2.
InstabilityProfile instability_profile(const Eigen::MatrixXd& z_runs);

/// Pearson correlation; lengths must match and be >= 3; zero-variance input
/// is an error.
double score_correlation(const Eigen::VectorXd& za, const Eigen::VectorXd& zb);

}  // namespace knockens
