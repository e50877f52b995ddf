#include "knockens/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "knockens/errors.hpp"

namespace knockens {

PowerFdp power_fdp(const std::vector<int>& selected, const std::vector<int>& true_support) {
  if (true_support.empty()) throw DataError("power/FDP needs a nonempty true support");
  const std::set<int> truth(true_support.begin(), true_support.end());
  long hits = 0;
  for (int j : selected)
    if (truth.count(j)) ++hits;
  PowerFdp out;
  out.power = double(hits) / double(truth.size());
  out.fdp = double(static_cast<long>(selected.size()) - hits) /
            double(std::max<std::size_t>(1, selected.size()));
  return out;
}

double jaccard(const std::vector<int>& a, const std::vector<int>& b) {
  const std::set<int> sa(a.begin(), a.end());
  const std::set<int> sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) return 1.0;  // identical (empty) selections
  long inter = 0;
  for (int j : sa)
    if (sb.count(j)) ++inter;
  const long uni = static_cast<long>(sa.size() + sb.size()) - inter;
  return double(inter) / double(uni);
}

InstabilityProfile instability_profile(const Eigen::MatrixXd& z_runs) {
  const Eigen::Index runs = z_runs.rows();
  const Eigen::Index p = z_runs.cols();
  if (runs < 2) throw DataError("instability profile needs at least 2 runs");

  InstabilityProfile out;
  out.instability.resize(p);
  out.signal_strength.resize(p);
  out.zero_mean.assign(p, false);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double mean = z_runs.col(j).mean();
    out.signal_strength(j) = mean;
    if (mean == 0.0) {
      out.instability(j) = 0.0;
      out.zero_mean[j] = true;
      continue;
    }
    const double var = (z_runs.col(j).array() - mean).square().sum() / double(runs - 1);
    out.instability(j) = std::sqrt(var) / mean;
  }
  return out;
}

double score_correlation(const Eigen::VectorXd& za, const Eigen::VectorXd& zb) {
  if (za.size() != zb.size()) throw DataError("score correlation: length mismatch");
  if (za.size() < 3) throw DataError("score correlation needs at least 3 entries");
  const Eigen::ArrayXd ca = za.array() - za.mean();
  const Eigen::ArrayXd cb = zb.array() - zb.mean();
  const double na = std::sqrt(ca.square().sum());
  const double nb = std::sqrt(cb.square().sum());
  if (na == 0.0 || nb == 0.0) throw DataError("score correlation: zero-variance input");
  return (ca * cb).sum() / (na * nb);
}

}  // namespace knockens
