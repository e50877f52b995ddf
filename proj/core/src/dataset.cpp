#include "knockens/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "knockens/csv.hpp"
#include "knockens/errors.hpp"
#include "knockens/rng.hpp"

namespace knockens {

using nlohmann::json;

void SimConfig::validate() const {
  if (n <= 0) throw ConfigError("simulation: n must be positive");
  if (p <= 0) throw ConfigError("simulation: p must be positive");
  if (r < 1) throw ConfigError("simulation: r must be >= 1");
  if (s <= 0 || s > p) throw ConfigError("simulation: s must satisfy 0 < s <= p");
  if (amplitude < 0) throw ConfigError("simulation: amplitude must be >= 0");
  if (noise_scale < 0) throw ConfigError("simulation: noise_scale must be >= 0");
}

Dataset simulate(const SimConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);

  const Eigen::MatrixXd factors = gaussian_matrix(cfg.n, cfg.r, rng);
  const Eigen::MatrixXd loadings = gaussian_matrix(cfg.r, cfg.p, rng);
  const Eigen::MatrixXd idio = gaussian_matrix(cfg.n, cfg.p, rng);

  Dataset ds;
  ds.task = cfg.task;
  ds.X = factors * loadings + idio;

  // signal locations: draw s distinct indices, signs +-A with equal probability
  std::vector<int> perm(cfg.p);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> support(perm.begin(), perm.begin() + cfg.s);
  std::sort(support.begin(), support.end());

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(cfg.p);
  std::uniform_int_distribution<int> coin(0, 1);
  for (int j : support) beta(j) = coin(rng) ? cfg.amplitude : -cfg.amplitude;

  const Eigen::VectorXd signal = ds.X * beta;
  if (cfg.task == Task::regression) {
    ds.y = signal + cfg.noise_scale * gaussian_vector(cfg.n, rng);
  } else {
    ds.y.resize(cfg.n);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int i = 0; i < cfg.n; ++i) {
      const double prob = 1.0 / (1.0 + std::exp(-signal(i)));
      ds.y(i) = unif(rng) < prob ? 1.0 : 0.0;
    }
  }

  ds.beta = beta;
  ds.loadings = loadings;
  // amplitude 0 is the pure-noise case; there is no ground truth to recover
  ds.true_support = cfg.amplitude > 0 ? support : std::vector<int>{};
  return ds;
}

Dataset load_csv(const std::filesystem::path& path, const CsvLoadOptions& options) {
  const CsvTable table = read_csv(path);

  const int y_col = table.column_index(options.response_column);
  if (y_col < 0)
    throw DataError("response column '" + options.response_column + "' not found in " +
                    path.string());

  std::vector<int> cov_cols;
  for (const auto& name : options.covariate_columns) {
    const int c = table.column_index(name);
    if (c < 0) throw DataError("covariate column '" + name + "' not found in " + path.string());
    if (c == y_col)
      throw DataError("column '" + name + "' used as both response and covariate");
    cov_cols.push_back(c);
  }

  std::vector<int> x_cols;
  for (int c = 0; c < static_cast<int>(table.header.size()); ++c) {
    if (c == y_col) continue;
    if (std::find(cov_cols.begin(), cov_cols.end(), c) != cov_cols.end()) continue;
    x_cols.push_back(c);
  }
  if (x_cols.empty()) throw DataError("no feature columns remain in " + path.string());

  const Eigen::Index n = table.values.rows();
  if (n == 0) throw DataError("CSV file has no data rows: " + path.string());

  Dataset ds;
  ds.y = table.values.col(y_col);
  ds.X.resize(n, static_cast<Eigen::Index>(x_cols.size()));
  for (std::size_t j = 0; j < x_cols.size(); ++j) ds.X.col(j) = table.values.col(x_cols[j]);

  if (!cov_cols.empty()) {
    Eigen::MatrixXd cov(n, static_cast<Eigen::Index>(cov_cols.size()));
    for (std::size_t j = 0; j < cov_cols.size(); ++j) cov.col(j) = table.values.col(cov_cols[j]);
    ds.covariates = cov;
  }

  if (options.standardize) {
    if (n < 2) throw DataError("standardization needs at least 2 rows");
    for (Eigen::Index j = 0; j < ds.X.cols(); ++j) {
      const double mean = ds.X.col(j).mean();
      const double var = (ds.X.col(j).array() - mean).square().sum() / double(n - 1);
      if (var <= 0.0)
        throw DataError("column '" + table.header[x_cols[j]] +
                        "' is constant; cannot standardize");
      ds.X.col(j) = (ds.X.col(j).array() - mean) / std::sqrt(var);
    }
  }

  // binary responses are detected so fold stratification can kick in
  bool binary = true;
  for (Eigen::Index i = 0; i < n && binary; ++i)
    binary = (ds.y(i) == 0.0 || ds.y(i) == 1.0);
  ds.task = binary ? Task::binary : Task::regression;
  return ds;
}

Eigen::VectorXd feature_correlation_profile(const Eigen::MatrixXd& X) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (n < 3) throw DataError("correlation profile needs at least 3 rows");
  if (p < 2) throw DataError("correlation profile needs at least 2 columns");

  Eigen::MatrixXd centered = X.rowwise() - X.colwise().mean();
  Eigen::VectorXd norms(p);
  for (Eigen::Index j = 0; j < p; ++j) norms(j) = centered.col(j).norm();

  Eigen::VectorXd profile(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    double best = std::numeric_limits<double>::lowest();
    for (Eigen::Index k = 0; k < p; ++k) {
      if (k == j) continue;
      double corr = 0.0;  // zero-variance columns correlate as 0
      if (norms(j) > 0 && norms(k) > 0)
        corr = centered.col(j).dot(centered.col(k)) / (norms(j) * norms(k));
      best = std::max(best, corr);
    }
    profile(j) = best;
  }
  return profile;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& csv_path,
                  const std::filesystem::path& sidecar_path, std::uint64_t seed) {
  std::vector<std::string> header;
  Eigen::Index cols = dataset.p() + 1;
  const Eigen::Index cov_dim = dataset.covariates ? dataset.covariates->cols() : 0;
  cols += cov_dim;

  Eigen::MatrixXd values(dataset.n(), cols);
  for (Eigen::Index j = 0; j < dataset.p(); ++j) {
    header.push_back("X_" + std::to_string(j + 1));
    values.col(j) = dataset.X.col(j);
  }
  for (Eigen::Index j = 0; j < cov_dim; ++j) {
    header.push_back("C_" + std::to_string(j + 1));
    values.col(dataset.p() + j) = dataset.covariates->col(j);
  }
  header.push_back("y");
  values.col(cols - 1) = dataset.y;
  write_csv(csv_path, header, values);

  json meta;
  meta["seed"] = seed;
  meta["task"] = dataset.task == Task::binary ? "binary" : "regression";
  meta["p"] = dataset.p();
  meta["covariate_dim"] = cov_dim;
  if (dataset.true_support) {
    json support = json::array();
    for (int j : *dataset.true_support) support.push_back(j + 1);
    meta["support"] = support;
  }
  if (dataset.beta) {
    json beta = json::array();
    for (Eigen::Index j = 0; j < dataset.beta->size(); ++j) beta.push_back((*dataset.beta)(j));
    meta["beta"] = beta;
  }
  std::ofstream out(sidecar_path);
  if (!out) throw IoError("cannot write dataset sidecar: " + sidecar_path.string());
  out << meta.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& csv_path,
                     const std::filesystem::path& sidecar_path) {
  json meta;
  {
    std::ifstream in(sidecar_path);
    if (!in) throw IoError("cannot open dataset sidecar: " + sidecar_path.string());
    in >> meta;
  }
  CsvLoadOptions options;
  options.response_column = "y";
  const int cov_dim = meta.value("covariate_dim", 0);
  for (int j = 0; j < cov_dim; ++j)
    options.covariate_columns.push_back("C_" + std::to_string(j + 1));

  Dataset ds = load_csv(csv_path, options);
  ds.task = meta.value("task", std::string("regression")) == "binary" ? Task::binary
                                                                      : Task::regression;
  if (meta.contains("support")) {
    std::vector<int> support;
    for (const auto& v : meta["support"]) support.push_back(v.get<int>() - 1);
    ds.true_support = support;
  }
  if (meta.contains("beta")) {
    Eigen::VectorXd beta(meta["beta"].size());
    for (std::size_t j = 0; j < meta["beta"].size(); ++j) beta(j) = meta["beta"][j].get<double>();
    ds.beta = beta;
  }
  return ds;
}

}  // namespace knockens
