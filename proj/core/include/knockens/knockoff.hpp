#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace knockens {

/// Second-order Gaussian knockoff model. `s` is the decorrelation diagonal
/// from the equicorrelated rule; 2*Sigma - diag(s) must stay PSD for the
/// single-knockoff conditional to be a valid Gaussian.
struct KnockoffModel {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  Eigen::VectorXd s;
  int copies = 1;  // M

  Eigen::Index p() const { return mu.size(); }
};

/// Originals followed by the M knockoff blocks: [X | Xk1 | ... | XkM].
/// Column j of block m mirrors original column j.
struct KnockoffAugmentedData {
  Eigen::MatrixXd x_aug;  // n x ((1+M)*p)
  KnockoffModel model;

  Eigen::Index n() const { return x_aug.rows(); }
  Eigen::Index p() const { return model.p(); }
  int copies() const { return model.copies; }
};

/// min(1, 2*lambda_min(correlation(sigma))): shared factor of the
/// equicorrelated rule, exposed for direct testing against closed forms.
double equicorrelated_scale(const Eigen::MatrixXd& sigma);

/// mu = column means; sigma = sample covariance (ddof = 1) shrunk toward its
/// diagonal with the smallest weight giving lambda_min >= 1e-6;
/// s_j = sigma_jj * equicorrelated_scale(sigma).
KnockoffModel fit_gaussian_model(const Eigen::MatrixXd& X, int copies);

/// Rows drawn from the Gaussian conditional
///   Xk | X ~ N(X - (X - mu) Sigma^-1 D, 2D - D Sigma^-1 D),  D = diag(s).
/// Requires copies == 1. Never reads the response.
KnockoffAugmentedData sample_single_knockoffs(const Eigen::MatrixXd& X,
                                              const KnockoffModel& model, std::uint64_t seed);

/// Sequential conditional independent tuples: for j = 1..p draws M
/// independent samples from the Gaussian law of X_j given all other
/// originals and all previously generated knockoff columns, maintaining the
/// running joint covariance and conditioning via Schur complement.
KnockoffAugmentedData sample_scit_knockoffs(const Eigen::MatrixXd& X,
                                            const KnockoffModel& model, std::uint64_t seed);

/// Column names for the augmented matrix: X_1..X_p, K1_1..K1_p, ..., KM_1..KM_p.
std::vector<std::string> augmented_headers(int p, int copies);

void save_knockoff_model(const KnockoffModel& model, const std::filesystem::path& path);
KnockoffModel load_knockoff_model(const std::filesystem::path& path);

void save_augmented_csv(const KnockoffAugmentedData& data, const std::filesystem::path& path);
KnockoffAugmentedData load_augmented(const std::filesystem::path& csv_path,
                                     const std::filesystem::path& model_path);

}  // namespace knockens
