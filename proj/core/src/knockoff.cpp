#include "knockens/knockoff.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "knockens/csv.hpp"
#include "knockens/errors.hpp"
#include "knockens/rng.hpp"

namespace knockens {

using nlohmann::json;

namespace {

double min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Cholesky with one 1e-8 jitter retry; throws NumericError on failure.
Eigen::LLT<Eigen::MatrixXd> cholesky_or_throw(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) return llt;
  Eigen::MatrixXd jittered = m;
  jittered.diagonal().array() += 1e-8;
  llt.compute(jittered);
  if (llt.info() == Eigen::Success) return llt;
  throw NumericError(std::string(what) + ": matrix is not positive definite after jitter");
}

}  // namespace

double equicorrelated_scale(const Eigen::MatrixXd& sigma) {
  const Eigen::Index p = sigma.rows();
  if (p == 0 || sigma.cols() != p) throw DataError("equicorrelated rule: bad covariance shape");
  Eigen::VectorXd inv_sd(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    if (sigma(j, j) <= 0) throw DataError("equicorrelated rule: non-positive variance");
    inv_sd(j) = 1.0 / std::sqrt(sigma(j, j));
  }
  const Eigen::MatrixXd corr = inv_sd.asDiagonal() * sigma * inv_sd.asDiagonal();
  return std::min(1.0, 2.0 * min_eigenvalue(corr));
}

KnockoffModel fit_gaussian_model(const Eigen::MatrixXd& X, int copies) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (p == 0) throw DataError("knockoff model: no feature columns");
  if (n < 3) throw DataError("knockoff model: need at least 3 rows");
  if (copies < 1) throw ConfigError("knockoff model: copies must be >= 1");

  KnockoffModel model;
  model.copies = copies;
  model.mu = X.colwise().mean();

  const Eigen::MatrixXd centered = X.rowwise() - model.mu.transpose();
  const Eigen::MatrixXd sample_cov = (centered.transpose() * centered) / double(n - 1);
  const Eigen::MatrixXd diag_part = sample_cov.diagonal().asDiagonal();

  // shrink toward the diagonal with the smallest weight giving
  // lambda_min >= 1e-6; lambda_min is concave in the weight, so the feasible
  // set is an interval and bisection finds its left endpoint
  constexpr double kMinEig = 1e-6;
  double weight = 0.0;
  if (min_eigenvalue(sample_cov) < kMinEig) {
    if (sample_cov.diagonal().minCoeff() < kMinEig)
      throw DataError("knockoff model: zero-variance column, covariance cannot be regularized");
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      const Eigen::MatrixXd candidate = (1.0 - mid) * sample_cov + mid * diag_part;
      (min_eigenvalue(candidate) >= kMinEig ? hi : lo) = mid;
    }
    weight = hi;
  }
  model.sigma = (1.0 - weight) * sample_cov + weight * diag_part;

  const double scale = equicorrelated_scale(model.sigma);
  model.s = model.sigma.diagonal() * scale;
  return model;
}

KnockoffAugmentedData sample_single_knockoffs(const Eigen::MatrixXd& X,
                                              const KnockoffModel& model, std::uint64_t seed) {
  if (model.copies != 1)
    throw ConfigError("single-knockoff sampler requires a model with copies == 1");
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (p != model.p()) throw DataError("single-knockoff sampler: X width != model dimension");

  const auto sigma_llt = cholesky_or_throw(model.sigma, "knockoff covariance");
  // A = Sigma^-1 D, D = diag(s)
  const Eigen::MatrixXd a = sigma_llt.solve(Eigen::MatrixXd(model.s.asDiagonal()));
  Eigen::MatrixXd cond_cov = 2.0 * Eigen::MatrixXd(model.s.asDiagonal()) -
                             model.s.asDiagonal() * a;
  cond_cov = 0.5 * (cond_cov + cond_cov.transpose());  // symmetrize roundoff
  const auto cond_llt = cholesky_or_throw(cond_cov, "knockoff conditional covariance");
  const Eigen::MatrixXd chol_l = cond_llt.matrixL();

  const Eigen::MatrixXd centered = X.rowwise() - model.mu.transpose();
  const Eigen::MatrixXd cond_mean = X - centered * a;

  Rng rng(seed);
  const Eigen::MatrixXd noise = gaussian_matrix(n, p, rng);

  KnockoffAugmentedData out;
  out.model = model;
  out.x_aug.resize(n, 2 * p);
  out.x_aug.leftCols(p) = X;
  out.x_aug.rightCols(p) = cond_mean + noise * chol_l.transpose();
  return out;
}

KnockoffAugmentedData sample_scit_knockoffs(const Eigen::MatrixXd& X,
                                            const KnockoffModel& model, std::uint64_t seed) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  const int copies = model.copies;
  if (p != model.p()) throw DataError("SCIT sampler: X width != model dimension");
  if (copies < 1) throw ConfigError("SCIT sampler: copies must be >= 1");

  const Eigen::Index total = p * (1 + copies);
  // realized columns in generation order: originals, then M new columns per step
  Eigen::MatrixXd realized(n, total);
  realized.leftCols(p) = X;
  Eigen::VectorXd means(total);
  means.head(p) = model.mu;

  // running joint covariance of all realized columns
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(total, total);
  gamma.topLeftCorner(p, p) = model.sigma;

  Rng rng(seed);

  for (Eigen::Index j = 0; j < p; ++j) {
    const Eigen::Index dim = p + j * copies;  // realized columns so far
    const Eigen::Index rest_dim = dim - 1;    // everything except original j

    std::vector<Eigen::Index> rest;
    rest.reserve(rest_dim);
    for (Eigen::Index u = 0; u < dim; ++u)
      if (u != j) rest.push_back(u);

    Eigen::MatrixXd gamma_rest(rest_dim, rest_dim);
    Eigen::VectorXd cross(rest_dim);
    for (Eigen::Index a = 0; a < rest_dim; ++a) {
      cross(a) = gamma(rest[a], j);
      for (Eigen::Index b = 0; b < rest_dim; ++b) gamma_rest(a, b) = gamma(rest[a], rest[b]);
    }

    Eigen::LLT<Eigen::MatrixXd> llt(gamma_rest);
    if (llt.info() != Eigen::Success) {
      gamma_rest.diagonal().array() += 1e-8;
      llt.compute(gamma_rest);
      if (llt.info() != Eigen::Success)
        throw NumericError("SCIT: singular conditioning block at feature " + std::to_string(j + 1));
    }
    const Eigen::VectorXd coef = llt.solve(cross);
    const double cond_var = std::max(0.0, gamma(j, j) - cross.dot(coef));
    const double cond_sd = std::sqrt(cond_var);

    // conditional mean per row: mu_j + sum_a coef_a * (v_a - mu_a)
    Eigen::VectorXd cond_mean = Eigen::VectorXd::Constant(n, means(j));
    for (Eigen::Index a = 0; a < rest_dim; ++a)
      cond_mean += coef(a) * (realized.col(rest[a]).array() - means(rest[a])).matrix();

    for (int m = 0; m < copies; ++m) {
      const Eigen::Index new_col = dim + m;
      realized.col(new_col) = cond_mean + cond_sd * gaussian_vector(n, rng);
      means(new_col) = means(j);
      // the new column mirrors X_j against everything already realized,
      // except that its covariance with X_j and with sibling copies drops to
      // gamma_jj - cond_var
      for (Eigen::Index u = 0; u < dim; ++u) {
        const double cov = (u == j) ? gamma(j, j) - cond_var : gamma(j, u);
        gamma(new_col, u) = cov;
        gamma(u, new_col) = cov;
      }
      for (Eigen::Index sib = dim; sib < new_col; ++sib) {
        gamma(new_col, sib) = gamma(j, j) - cond_var;
        gamma(sib, new_col) = gamma(j, j) - cond_var;
      }
      gamma(new_col, new_col) = gamma(j, j);
    }
  }

  // rearrange generation order (per-feature tuples) into block layout
  KnockoffAugmentedData out;
  out.model = model;
  out.x_aug.resize(n, total);
  out.x_aug.leftCols(p) = X;
  for (Eigen::Index j = 0; j < p; ++j)
    for (int m = 0; m < copies; ++m)
      out.x_aug.col((m + 1) * p + j) = realized.col(p + j * copies + m);
  return out;
}

std::vector<std::string> augmented_headers(int p, int copies) {
  std::vector<std::string> header;
  header.reserve(static_cast<std::size_t>(p) * (1 + copies));
  for (int j = 1; j <= p; ++j) header.push_back("X_" + std::to_string(j));
  for (int m = 1; m <= copies; ++m)
    for (int j = 1; j <= p; ++j)
      header.push_back("K" + std::to_string(m) + "_" + std::to_string(j));
  return header;
}

void save_knockoff_model(const KnockoffModel& model, const std::filesystem::path& path) {
  json doc;
  doc["M"] = model.copies;
  doc["mu"] = std::vector<double>(model.mu.data(), model.mu.data() + model.mu.size());
  doc["s"] = std::vector<double>(model.s.data(), model.s.data() + model.s.size());
  json sigma = json::array();
  for (Eigen::Index i = 0; i < model.sigma.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < model.sigma.cols(); ++j) row.push_back(model.sigma(i, j));
    sigma.push_back(row);
  }
  doc["Sigma"] = sigma;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write knockoff model: " + path.string());
  out << doc.dump(2) << '\n';
}

KnockoffModel load_knockoff_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open knockoff model: " + path.string());
  json doc;
  in >> doc;

  KnockoffModel model;
  model.copies = doc.at("M").get<int>();
  const auto& mu = doc.at("mu");
  const auto& s = doc.at("s");
  const auto& sigma = doc.at("Sigma");
  const Eigen::Index p = static_cast<Eigen::Index>(mu.size());
  model.mu.resize(p);
  model.s.resize(p);
  model.sigma.resize(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    model.mu(j) = mu[j].get<double>();
    model.s(j) = s[j].get<double>();
    for (Eigen::Index k = 0; k < p; ++k) model.sigma(j, k) = sigma[j][k].get<double>();
  }
  return model;
}

void save_augmented_csv(const KnockoffAugmentedData& data, const std::filesystem::path& path) {
  write_csv(path, augmented_headers(static_cast<int>(data.p()), data.copies()), data.x_aug);
}

KnockoffAugmentedData load_augmented(const std::filesystem::path& csv_path,
                                     const std::filesystem::path& model_path) {
  KnockoffAugmentedData data;
  data.model = load_knockoff_model(model_path);
  const CsvTable table = read_csv(csv_path);
  const Eigen::Index expected = data.model.p() * (1 + data.model.copies);
  if (table.values.cols() != expected)
    throw DataError("augmented CSV has " + std::to_string(table.values.cols()) +
                    " columns, model expects " + std::to_string(expected));
  data.x_aug = table.values;
  return data;
}

}  // namespace knockens
