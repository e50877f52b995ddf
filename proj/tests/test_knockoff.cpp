#include <doctest.h>

#include <Eigen/Dense>
#include <filesystem>
#include <random>

#include "knockens/errors.hpp"
#include "knockens/knockoff.hpp"
#include "knockens/rng.hpp"
#include "oracles.hpp"

using namespace knockens;

namespace {

Eigen::MatrixXd ar1_sigma(int p, double rho) {
  Eigen::MatrixXd sigma(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) sigma(i, j) = std::pow(rho, std::abs(i - j));
  return sigma;
}

/// X ~ N(mu, sigma) by Cholesky.
Eigen::MatrixXd gaussian_data(int n, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                              std::uint64_t seed) {
  Rng rng(seed);
  const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(sigma).matrixL();
  Eigen::MatrixXd x = gaussian_matrix(n, mu.size(), rng) * chol.transpose();
  x.rowwise() += mu.transpose();
  return x;
}

KnockoffModel exact_model(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, int copies) {
  KnockoffModel model;
  model.mu = mu;
  model.sigma = sigma;
  model.s = sigma.diagonal() * equicorrelated_scale(sigma);
  model.copies = copies;
  return model;
}

}  // namespace

TEST_SUITE("knockoff") {

TEST_CASE("equicorrelated scale: 2x2 with rho=0.5 by hand") {
  // eigenvalues of [[1, .5], [.5, 1]] are 1.5 and 0.5; min(1, 2*0.5) = 1
  const double scale = equicorrelated_scale(ar1_sigma(2, 0.5));
  CHECK(scale == doctest::Approx(1.0).epsilon(1e-12));

  // rho=0.8 leaves the correlation eigenvalue in charge: min(1, 2*0.2) = 0.4
  CHECK(equicorrelated_scale(ar1_sigma(2, 0.8)) == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("equicorrelated s scales with the variance") {
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(2, 2);
  sigma(0, 0) = 4.0;
  sigma(1, 1) = 1.0;
  KnockoffModel model = exact_model(Eigen::VectorXd::Zero(2), sigma, 1);
  CHECK(model.s(0) == doctest::Approx(4.0));
  CHECK(model.s(1) == doctest::Approx(1.0));
}

TEST_CASE("fitting on iid standard normal data recovers identity and s near 1") {
  Rng rng(1);
  const Eigen::MatrixXd x = gaussian_matrix(20000, 4, rng);
  const KnockoffModel model = fit_gaussian_model(x, 1);
  CHECK((model.sigma - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 0.05);
  CHECK((model.s.array() - 1.0).abs().maxCoeff() < 0.1);
  CHECK(model.mu.cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("fit rejects degenerate inputs") {
  CHECK_THROWS_AS(fit_gaussian_model(Eigen::MatrixXd::Random(2, 3), 1), DataError);
  CHECK_THROWS_AS(fit_gaussian_model(Eigen::MatrixXd(5, 0), 1), DataError);
}

TEST_CASE("shrinkage keeps the p > n covariance invertible") {
  Rng rng(2);
  const Eigen::MatrixXd x = gaussian_matrix(15, 40, rng);  // p >> n
  const KnockoffModel model = fit_gaussian_model(x, 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(model.sigma, Eigen::EigenvaluesOnly);
  CHECK(es.eigenvalues().minCoeff() >= 1e-6 * 0.99);
  // the sampler must actually run in this regime
  const auto aug = sample_single_knockoffs(x, model, 3);
  CHECK(aug.x_aug.allFinite());
}

TEST_CASE("single knockoffs with identity covariance are independent of X") {
  const int p = 3;
  const auto model =
      exact_model(Eigen::VectorXd::Zero(p), Eigen::MatrixXd::Identity(p, p), 1);
  const Eigen::MatrixXd x =
      gaussian_data(20000, model.mu, model.sigma, 11);
  const auto aug = sample_single_knockoffs(x, model, 12);
  const Eigen::MatrixXd cross =
      oracles::sample_cov(aug.x_aug.leftCols(p), aug.x_aug.rightCols(p));
  CHECK(cross.cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("single knockoffs reproduce the second-moment contract") {
  const int p = 5, n = 20000;
  const Eigen::MatrixXd sigma = ar1_sigma(p, 0.5);
  const auto model = exact_model(Eigen::VectorXd::Zero(p), sigma, 1);
  const Eigen::MatrixXd x = gaussian_data(n, model.mu, sigma, 21);
  const auto aug = sample_single_knockoffs(x, model, 22);

  const Eigen::MatrixXd cov_x = oracles::sample_cov(aug.x_aug.leftCols(p));
  const Eigen::MatrixXd cov_k = oracles::sample_cov(aug.x_aug.rightCols(p));
  CHECK((cov_k - cov_x).cwiseAbs().maxCoeff() < 0.1);

  const Eigen::MatrixXd cross =
      oracles::sample_cov(aug.x_aug.leftCols(p), aug.x_aug.rightCols(p));
  Eigen::MatrixXd target = sigma;
  target.diagonal() -= model.s;
  CHECK((cross - target).cwiseAbs().maxCoeff() < 0.1);
}

TEST_CASE("samplers are deterministic under the seed") {
  const int p = 4;
  const Eigen::MatrixXd sigma = ar1_sigma(p, 0.3);
  const auto model1 = exact_model(Eigen::VectorXd::Zero(p), sigma, 1);
  const Eigen::MatrixXd x = gaussian_data(200, model1.mu, sigma, 31);
  CHECK(sample_single_knockoffs(x, model1, 7).x_aug ==
        sample_single_knockoffs(x, model1, 7).x_aug);

  const auto model2 = exact_model(Eigen::VectorXd::Zero(p), sigma, 2);
  CHECK(sample_scit_knockoffs(x, model2, 7).x_aug ==
        sample_scit_knockoffs(x, model2, 7).x_aug);
}

TEST_CASE("SCIT with identity covariance gives iid standard normal knockoffs") {
  const int p = 3, n = 20000;
  const auto model =
      exact_model(Eigen::VectorXd::Zero(p), Eigen::MatrixXd::Identity(p, p), 2);
  const Eigen::MatrixXd x = gaussian_data(n, model.mu, model.sigma, 41);
  const auto aug = sample_scit_knockoffs(x, model, 42);

  const Eigen::MatrixXd knockoffs = aug.x_aug.rightCols(2 * p);
  CHECK(knockoffs.colwise().mean().cwiseAbs().maxCoeff() < 0.05);
  const Eigen::MatrixXd cov = oracles::sample_cov(knockoffs);
  CHECK((cov - Eigen::MatrixXd::Identity(2 * p, 2 * p)).cwiseAbs().maxCoeff() < 0.05);
  // and they are decorrelated from the originals
  CHECK(oracles::sample_cov(aug.x_aug.leftCols(p), knockoffs).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("SCIT with M=1 matches the single-knockoff moments") {
  const int p = 4, n = 20000;
  const auto model =
      exact_model(Eigen::VectorXd::Zero(p), Eigen::MatrixXd::Identity(p, p), 1);
  const Eigen::MatrixXd x = gaussian_data(n, model.mu, model.sigma, 51);

  const auto scit = sample_scit_knockoffs(x, model, 52);
  const auto single = sample_single_knockoffs(x, model, 53);

  const Eigen::MatrixXd cov_scit = oracles::sample_cov(scit.x_aug);
  const Eigen::MatrixXd cov_single = oracles::sample_cov(single.x_aug);
  CHECK((cov_scit - cov_single).cwiseAbs().maxCoeff() < 0.1);
  CHECK((scit.x_aug.rightCols(p).colwise().mean() -
         single.x_aug.rightCols(p).colwise().mean())
            .cwiseAbs()
            .maxCoeff() < 0.05);
}

TEST_CASE("SCIT with p=1 and M=3 yields three independent copies") {
  const auto model = exact_model(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1), 3);
  const Eigen::MatrixXd x = gaussian_data(20000, model.mu, model.sigma, 61);
  const auto aug = sample_scit_knockoffs(x, model, 62);
  CHECK(aug.x_aug.cols() == 4);
  const Eigen::MatrixXd cov = oracles::sample_cov(aug.x_aug.rightCols(3));
  for (int a = 0; a < 3; ++a) {
    CHECK(cov(a, a) == doctest::Approx(1.0).epsilon(0.06));
    for (int b = a + 1; b < 3; ++b) CHECK(std::abs(cov(a, b)) < 0.05);
  }
}

TEST_CASE("swap exchangeability at the second-moment level (SCIT, M=2)") {
  const int p = 5, n = 20000, copies = 2;
  const Eigen::MatrixXd sigma = ar1_sigma(p, 0.4);
  const auto model = exact_model(Eigen::VectorXd::Zero(p), sigma, copies);
  const Eigen::MatrixXd x = gaussian_data(n, model.mu, sigma, 71);
  const auto aug = sample_scit_knockoffs(x, model, 72);

  Rng rng(73);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> pick_copy(1, copies);
  Eigen::MatrixXd swapped = aug.x_aug;
  for (int j = 0; j < p; ++j) {
    if (coin(rng) == 0) continue;
    const int m = pick_copy(rng);
    swapped.col(j).swap(swapped.col(m * p + j));
  }
  const Eigen::MatrixXd diff =
      oracles::sample_cov(swapped) - oracles::sample_cov(aug.x_aug);
  CHECK(diff.cwiseAbs().maxCoeff() < 0.1);
}

TEST_CASE("swap exchangeability at the second-moment level (single)") {
  const int p = 5, n = 20000;
  const Eigen::MatrixXd sigma = ar1_sigma(p, 0.4);
  const auto model = exact_model(Eigen::VectorXd::Zero(p), sigma, 1);
  const Eigen::MatrixXd x = gaussian_data(n, model.mu, sigma, 81);
  const auto aug = sample_single_knockoffs(x, model, 82);

  Eigen::MatrixXd swapped = aug.x_aug;
  for (int j : {0, 2, 3}) swapped.col(j).swap(swapped.col(p + j));
  const Eigen::MatrixXd diff =
      oracles::sample_cov(swapped) - oracles::sample_cov(aug.x_aug);
  CHECK(diff.cwiseAbs().maxCoeff() < 0.1);
}

TEST_CASE("sampler shape and layout bookkeeping") {
  const int p = 3;
  const auto model = exact_model(Eigen::VectorXd::Zero(p), ar1_sigma(p, 0.2), 2);
  const Eigen::MatrixXd x = gaussian_data(50, model.mu, model.sigma, 91);
  const auto aug = sample_scit_knockoffs(x, model, 92);
  CHECK(aug.x_aug.rows() == 50);
  CHECK(aug.x_aug.cols() == (1 + 2) * p);
  CHECK(aug.x_aug.leftCols(p) == x);

  CHECK(augmented_headers(2, 2) ==
        std::vector<std::string>{"X_1", "X_2", "K1_1", "K1_2", "K2_1", "K2_2"});

  CHECK_THROWS_AS(sample_single_knockoffs(x, model, 1), ConfigError);  // M=2 model
  const auto model1 = exact_model(Eigen::VectorXd::Zero(4), ar1_sigma(4, 0.2), 1);
  CHECK_THROWS_AS(sample_single_knockoffs(x, model1, 1), DataError);  // width mismatch
}

TEST_CASE("knockoff model JSON round trip") {
  const auto model = exact_model(Eigen::VectorXd::Ones(3), ar1_sigma(3, 0.6), 4);
  const auto path = std::filesystem::temp_directory_path() / "knockens_model_test.json";
  save_knockoff_model(model, path);
  const KnockoffModel back = load_knockoff_model(path);
  CHECK(back.copies == 4);
  CHECK((back.mu - model.mu).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.sigma - model.sigma).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.s - model.s).cwiseAbs().maxCoeff() == 0.0);
  std::filesystem::remove(path);
}

TEST_CASE("augmented CSV round trip") {
  const int p = 2;
  const auto model = exact_model(Eigen::VectorXd::Zero(p), ar1_sigma(p, 0.3), 1);
  const Eigen::MatrixXd x = gaussian_data(20, model.mu, model.sigma, 101);
  const auto aug = sample_single_knockoffs(x, model, 102);

  const auto dir = std::filesystem::temp_directory_path() / "knockens_aug_roundtrip";
  std::filesystem::create_directories(dir);
  save_augmented_csv(aug, dir / "augmented.csv");
  save_knockoff_model(model, dir / "model.json");
  const auto back = load_augmented(dir / "augmented.csv", dir / "model.json");
  CHECK(back.x_aug == aug.x_aug);
  CHECK(back.copies() == 1);
  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
