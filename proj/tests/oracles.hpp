#pragma once

// Test-only oracles, deliberately independent of the library implementations
// they check: direct-scan knockoff thresholds, central finite differences and
// a JacobiSVD rank. Kept dumb and quadratic on purpose.

#include <Eigen/Core>
#include <Eigen/SVD>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace oracles {

struct ThresholdResult {
  double threshold = std::numeric_limits<double>::infinity();
  std::vector<int> selected;
};

/// Scans every realized |W_j| (duplicates and all) as candidate t and counts
/// by direct loops; keeps the smallest qualifying t.
inline ThresholdResult single_threshold_bruteforce(const Eigen::VectorXd& w, double q) {
  ThresholdResult result;
  for (Eigen::Index c = 0; c < w.size(); ++c) {
    if (w(c) == 0.0) continue;
    const double t = std::abs(w(c));
    long neg = 0, pos = 0;
    for (Eigen::Index j = 0; j < w.size(); ++j) {
      if (w(j) <= -t) ++neg;
      if (w(j) >= t) ++pos;
    }
    if (pos > 0 && double(neg + 1) / double(pos) <= q && t < result.threshold)
      result.threshold = t;
  }
  if (!std::isinf(result.threshold))
    for (Eigen::Index j = 0; j < w.size(); ++j)
      if (w(j) >= result.threshold) result.selected.push_back(int(j));
  return result;
}

inline ThresholdResult multiple_threshold_bruteforce(const Eigen::VectorXi& kappa,
                                                     const Eigen::VectorXd& tau, int copies,
                                                     double q) {
  ThresholdResult result;
  for (Eigen::Index c = 0; c < tau.size(); ++c) {
    if (!(tau(c) > 0.0)) continue;
    const double t = tau(c);
    long knockoff_wins = 0, original_wins = 0;
    for (Eigen::Index j = 0; j < tau.size(); ++j) {
      if (tau(j) >= t) {
        if (kappa(j) >= 1) ++knockoff_wins;
        if (kappa(j) == 0) ++original_wins;
      }
    }
    const double ratio = (1.0 / copies + double(knockoff_wins) / copies) /
                         double(original_wins > 0 ? original_wins : 1);
    if (ratio <= q && t < result.threshold) result.threshold = t;
  }
  if (!std::isinf(result.threshold))
    for (Eigen::Index j = 0; j < tau.size(); ++j)
      if (kappa(j) == 0 && tau(j) >= result.threshold) result.selected.push_back(int(j));
  return result;
}

/// Central finite difference of a scalar function at theta, one coordinate.
inline double central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& theta, Eigen::Index i, double h) {
  Eigen::VectorXd plus = theta, minus = theta;
  plus(i) += h;
  minus(i) -= h;
  return (f(plus) - f(minus)) / (2.0 * h);
}

/// |a - b| relative to max(1, |a|, |b|).
inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

/// Numerical rank via JacobiSVD (the library side uses BDCSVD).
inline Eigen::Index svd_rank(const Eigen::MatrixXd& m, double rel_tol = 1e-10) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) <= 0.0) return 0;
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv(rank) >= rel_tol * sv(0)) ++rank;
  return rank;
}

/// Empirical covariance with ddof = 1.
inline Eigen::MatrixXd sample_cov(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::MatrixXd ca = a.rowwise() - a.colwise().mean();
  const Eigen::MatrixXd cb = b.rowwise() - b.colwise().mean();
  return (ca.transpose() * cb) / double(a.rows() - 1);
}

inline Eigen::MatrixXd sample_cov(const Eigen::MatrixXd& a) { return sample_cov(a, a); }

}  // namespace oracles
