#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace knockens {

enum class Task { regression, binary };

/// Linear-factor simulation: X = F * Lambda + E with F (n x r), Lambda (r x p)
/// and E (n x p) i.i.d. standard normal, so Cov(X) = Lambda' Lambda + I.
/// The response is y = X beta + noise_scale * eps for regression, and
/// Bernoulli with logit X beta for the binary task. beta carries `s` entries
/// drawn uniformly from {+amplitude, -amplitude}; the rest are zero.
struct SimConfig {
  int n = 0;
  int p = 0;
  int r = 1;
  int s = 0;
  double amplitude = 0.0;
  double noise_scale = 1.0;
  Task task = Task::regression;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

/// Feature indices are 0-based in memory; serialized artifacts use 1-based
/// indices. `amplitude == 0` is the documented pure-noise case: beta is all
/// zero and true_support is an empty set.
struct Dataset {
  Eigen::MatrixXd X;  // n x p
  Eigen::VectorXd y;  // n
  std::optional<Eigen::MatrixXd> covariates;      // n x c
  std::optional<std::vector<int>> true_support;   // sorted, 0-based
  std::optional<Eigen::VectorXd> beta;            // length p
  /// Simulation metadata: the realized factor-loading matrix, so tests can
  /// check Cov(X) against Lambda' Lambda + I. Absent for loaded data.
  std::optional<Eigen::MatrixXd> loadings;        // r x p
  Task task = Task::regression;

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index p() const { return X.cols(); }
};

Dataset simulate(const SimConfig& cfg);

struct CsvLoadOptions {
  std::string response_column;
  std::vector<std::string> covariate_columns;
  bool standardize = false;
};

/// Columns other than the response/covariates become X in header order.
/// With `standardize`, each X column is centered and scaled to sample
/// variance 1 (ddof = 1); a constant column is an error.
Dataset load_csv(const std::filesystem::path& path, const CsvLoadOptions& options);

/// Entry j = max over k != j of Pearson correlation between columns j and k
/// (signed max, not |.|). Correlations involving a zero-variance column are
/// treated as 0. Requires n >= 3 and p >= 2.
Eigen::VectorXd feature_correlation_profile(const Eigen::MatrixXd& X);

/// data CSV plus a sidecar JSON carrying {seed, support (1-based), beta}.
void save_dataset(const Dataset& dataset, const std::filesystem::path& csv_path,
                  const std::filesystem::path& sidecar_path, std::uint64_t seed);

/// Reads back a dataset written by save_dataset. The sidecar is optional.
Dataset load_dataset(const std::filesystem::path& csv_path,
                     const std::filesystem::path& sidecar_path);

}  // namespace knockens
