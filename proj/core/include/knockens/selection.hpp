#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace knockens {

/// Feature statistics contrasting original vs. knockoff importance.
/// kappa/tau are present only for the multiple-knockoff statistic.
struct FeatureStats {
  Eigen::VectorXd w;                    // length p
  std::optional<Eigen::VectorXi> kappa; // argmax copy index, 0 = original
  std::optional<Eigen::VectorXd> tau;   // max minus median of the rest
  int copies = 1;
};

/// W_j = Z_j - Z_{j+p} for Z = [originals | knockoffs].
FeatureStats single_knockoff_stats(const Eigen::VectorXd& z);

/// Per feature j with scores (Z_j, Z_{j+p}, ..., Z_{j+M*p}):
///   kappa_j = argmax (ties -> smallest index),
///   tau_j   = max - median of the remaining M scores,
///   W_j     = (Z_j - median of the knockoff scores) * 1{Z_j >= max knockoff}.
/// Requires copies >= 2 so the median is over at least two values.
FeatureStats multiple_knockoff_stats(const Eigen::VectorXd& z, int copies);

struct SelectionResult {
  double threshold = std::numeric_limits<double>::infinity();
  std::vector<int> selected;  // sorted, 0-based
};

/// Knockoff+ threshold: T = min t in {|W_j| : W_j != 0} with
/// (#{W_j <= -t} + 1) / #{W_j >= t} <= q; selected = {j : W_j >= T}.
/// No qualifying t -> T = +inf and empty selection.
SelectionResult single_knockoff_threshold(const Eigen::VectorXd& w, double q);

/// Multiple-knockoff filter: T = min t in {tau_j > 0} with
/// (1/M + (1/M) #{kappa_j >= 1, tau_j >= t}) / max(1, #{kappa_j = 0, tau_j >= t}) <= q;
/// selected = {j : kappa_j = 0, tau_j >= T}.
SelectionResult multiple_knockoff_threshold(const Eigen::VectorXi& kappa,
                                            const Eigen::VectorXd& tau, int copies, double q);

/// Dispatches on stats.copies (single vs. multiple filter).
SelectionResult select_features(const FeatureStats& stats, double q);

struct SelectionReport {
  double q = 0.2;
  int copies = 1;
  double threshold = std::numeric_limits<double>::infinity();
  std::vector<int> selected;  // 0-based in memory, 1-based in JSON
  FeatureStats stats;
  std::string strategy;
};

void save_selection_report(const SelectionReport& report, const std::filesystem::path& path);
SelectionReport load_selection_report(const std::filesystem::path& path);

}  // namespace knockens
