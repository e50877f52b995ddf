#include "knockens/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "knockens/csv.hpp"
#include "knockens/errors.hpp"
#include "knockens/network.hpp"
#include "knockens/rng.hpp"

namespace knockens {

using nlohmann::json;

void GridSpec::validate() const {
  if (lambdas.empty()) throw ConfigError("grid: lambda list is empty");
  if (depths.empty()) throw ConfigError("grid: depth list is empty");
  for (double l : lambdas)
    if (l < 0) throw ConfigError("grid: lambda values must be >= 0");
  for (int d : depths)
    if (d < 1 || d > 3) throw ConfigError("grid: depths must be in {1,2,3}");
  if (epochs < 1) throw ConfigError("grid: epochs must be >= 1");
  if (folds < 2) throw ConfigError("grid: folds must be >= 2");
  if (batch_size < 1) throw ConfigError("grid: batch_size must be >= 1");
  if (learning_rate <= 0) throw ConfigError("grid: learning_rate must be positive");
  if (hidden < 1) throw ConfigError("grid: hidden width must be >= 1");
  if (dropout_prob < 0 || dropout_prob >= 1)
    throw ConfigError("grid: dropout_prob must be in [0, 1)");
}

std::vector<int> fold_assignments(const Eigen::VectorXd& y, Task task, int folds,
                                  std::uint64_t seed) {
  const Eigen::Index n = y.size();
  if (folds < 2 || folds > n) throw ConfigError("fold count must be in [2, n]");
  Rng rng(derive_seed(seed, 0xf01d5ULL));
  std::vector<int> fold(n, 0);

  auto assign = [&](std::vector<int>& idx) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < idx.size(); ++i) fold[idx[i]] = static_cast<int>(i % folds);
  };

  if (task == Task::binary) {
    std::vector<int> zeros, ones;
    for (Eigen::Index i = 0; i < n; ++i) (y(i) == 1.0 ? ones : zeros).push_back(int(i));
    assign(zeros);
    assign(ones);
  } else {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    assign(idx);
  }
  return fold;
}

TrajectoryStore::TrajectoryStore(std::vector<SettingInfo> settings,
                                 std::vector<TrajectoryRecord> records, int epochs,
                                 Eigen::Index z_dim)
    : settings_(std::move(settings)), records_(std::move(records)), epochs_(epochs),
      z_dim_(z_dim) {}

Eigen::MatrixXd TrajectoryStore::z_matrix() const {
  Eigen::MatrixXd z(records_.size(), z_dim_);
  for (std::size_t i = 0; i < records_.size(); ++i) z.row(i) = records_[i].z.transpose();
  return z;
}

namespace {

std::string setting_filename(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "setting_%04d.csv", index);
  return buf;
}

std::vector<std::string> setting_csv_header(Eigen::Index z_dim) {
  std::vector<std::string> header = {"epoch", "cv_loss"};
  for (Eigen::Index j = 1; j <= z_dim; ++j) header.push_back("z_" + std::to_string(j));
  return header;
}

struct EpochSnapshot {
  double cv_loss;
  Eigen::VectorXd z;
};

struct SettingOutcome {
  bool failed = false;
  std::string failure;
  std::vector<EpochSnapshot> epochs;
};

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, const std::vector<int>& rows) {
  Eigen::MatrixXd out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = m.row(rows[i]);
  return out;
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<int>& rows) {
  Eigen::VectorXd out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out(i) = v(rows[i]);
  return out;
}

/// One fold model (or the full-data model when val is empty) plus its slice
/// of the data and its private shuffle stream.
struct TrainingJob {
  Network net;
  Eigen::MatrixXd x_train;
  Eigen::MatrixXd cov_train;  // 0 cols when unused
  Eigen::VectorXd y_train;
  Eigen::MatrixXd x_val;
  Eigen::MatrixXd cov_val;
  Eigen::VectorXd y_val;
  Rng shuffle_rng;
  std::vector<int> order;

  TrainingJob(const NetworkConfig& cfg, Eigen::MatrixXd xt, Eigen::MatrixXd ct,
              Eigen::VectorXd yt, Eigen::MatrixXd xv, Eigen::MatrixXd cv, Eigen::VectorXd yv,
              std::uint64_t shuffle_seed)
      : net(cfg), x_train(std::move(xt)), cov_train(std::move(ct)), y_train(std::move(yt)),
        x_val(std::move(xv)), cov_val(std::move(cv)), y_val(std::move(yv)),
        shuffle_rng(shuffle_seed), order(x_train.rows()) {
    std::iota(order.begin(), order.end(), 0);
  }

  const Eigen::MatrixXd* cov_train_ptr() const {
    return cov_train.cols() > 0 ? &cov_train : nullptr;
  }
  const Eigen::MatrixXd* cov_val_ptr() const { return cov_val.cols() > 0 ? &cov_val : nullptr; }

  void run_epoch(int batch_size, double learning_rate, int epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const Eigen::Index n = x_train.rows();
    int batch_index = 0;
    for (Eigen::Index start = 0; start < n; start += batch_size, ++batch_index) {
      const Eigen::Index size = std::min<Eigen::Index>(batch_size, n - start);
      std::vector<int> rows(order.begin() + start, order.begin() + start + size);
      const Eigen::MatrixXd xb = gather_rows(x_train, rows);
      const Eigen::VectorXd yb = gather(y_train, rows);
      Eigen::MatrixXd cb;
      const Eigen::MatrixXd* cb_ptr = nullptr;
      if (cov_train.cols() > 0) {
        cb = gather_rows(cov_train, rows);
        cb_ptr = &cb;
      }
      try {
        net.train_step(xb, cb_ptr, yb, learning_rate);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index) + ": " + e.what());
      }
    }
  }

  double validation_loss() const { return net.data_loss(x_val, cov_val_ptr(), y_val); }
};

SettingOutcome train_setting(const Dataset& dataset, const KnockoffAugmentedData& augmented,
                             const GridSpec& grid, int setting,
                             const std::vector<int>& fold_of) {
  const std::uint64_t setting_seed = derive_seed(grid.effective_model_seed(), setting + 1);
  const Eigen::Index n = dataset.n();
  const Eigen::MatrixXd empty_cov(n, 0);
  const Eigen::MatrixXd& cov = dataset.covariates ? *dataset.covariates : empty_cov;

  NetworkConfig cfg;
  cfg.p = static_cast<int>(dataset.p());
  cfg.copies = augmented.copies();
  cfg.depth = grid.depth_of(setting);
  cfg.hidden = grid.hidden;
  cfg.lambda = grid.lambda_of(setting);
  cfg.dropout_prob = grid.dropout_prob;
  cfg.covariate_dim = static_cast<int>(cov.cols());
  cfg.task = dataset.task;

  std::vector<TrainingJob> jobs;
  jobs.reserve(grid.folds + 1);
  for (int f = 0; f < grid.folds; ++f) {
    std::vector<int> train_rows, val_rows;
    for (Eigen::Index i = 0; i < n; ++i)
      (fold_of[i] == f ? val_rows : train_rows).push_back(int(i));
    NetworkConfig fold_cfg = cfg;
    fold_cfg.seed = derive_seed(setting_seed, 100 + f);
    jobs.emplace_back(fold_cfg, gather_rows(augmented.x_aug, train_rows),
                      gather_rows(cov, train_rows), gather(dataset.y, train_rows),
                      gather_rows(augmented.x_aug, val_rows), gather_rows(cov, val_rows),
                      gather(dataset.y, val_rows), derive_seed(setting_seed, 200 + f));
  }
  NetworkConfig full_cfg = cfg;
  full_cfg.seed = derive_seed(setting_seed, 0);
  jobs.emplace_back(full_cfg, augmented.x_aug, cov, dataset.y, Eigen::MatrixXd(0, 0),
                    Eigen::MatrixXd(0, 0), Eigen::VectorXd(0), derive_seed(setting_seed, 99));
  TrainingJob& full_job = jobs.back();

  SettingOutcome outcome;
  outcome.epochs.reserve(grid.epochs);
  try {
    for (int epoch = 1; epoch <= grid.epochs; ++epoch) {
      for (auto& job : jobs) job.run_epoch(grid.batch_size, grid.learning_rate, epoch);

      double cv = 0.0;
      for (int f = 0; f < grid.folds; ++f) cv += jobs[f].validation_loss();
      cv /= grid.folds;
      if (!std::isfinite(cv))
        throw NumericError("epoch " + std::to_string(epoch) + ": CV loss is not finite");

      Eigen::VectorXd z = full_job.net.input_gradient_importance(
          augmented.x_aug, cov.cols() > 0 ? &cov : nullptr);
      outcome.epochs.push_back({cv, std::move(z)});
    }
  } catch (const Error& e) {
    outcome.failed = true;
    outcome.failure = e.what();
    outcome.epochs.clear();
  }
  return outcome;
}

void save_setting_csv(const std::filesystem::path& path, const SettingOutcome& outcome,
                      Eigen::Index z_dim) {
  Eigen::MatrixXd values(outcome.epochs.size(), 2 + z_dim);
  for (std::size_t e = 0; e < outcome.epochs.size(); ++e) {
    values(e, 0) = double(e + 1);
    values(e, 1) = outcome.epochs[e].cv_loss;
    values.row(e).tail(z_dim) = outcome.epochs[e].z.transpose();
  }
  write_csv(path, setting_csv_header(z_dim), values);
}

bool load_setting_csv(const std::filesystem::path& path, int epochs, Eigen::Index z_dim,
                      SettingOutcome* outcome) {
  if (!std::filesystem::exists(path)) return false;
  const CsvTable table = read_csv(path);
  if (table.values.rows() != epochs || table.values.cols() != 2 + z_dim)
    throw DataError("resume: " + path.string() + " has unexpected shape");
  outcome->failed = false;
  outcome->epochs.clear();
  for (Eigen::Index e = 0; e < epochs; ++e)
    outcome->epochs.push_back(
        {table.values(e, 1), table.values.row(e).tail(z_dim).transpose()});
  return true;
}

}  // namespace

TrajectoryStore run_grid(const Dataset& dataset, const KnockoffAugmentedData& augmented,
                         const GridSpec& grid, const RunGridOptions& options) {
  grid.validate();
  if (augmented.n() != dataset.n())
    throw DataError("augmented data is not row-aligned with the dataset");
  if (augmented.p() != dataset.p())
    throw DataError("augmented data feature count does not match the dataset");

  const int n_settings = grid.setting_count();
  const Eigen::Index z_dim = (1 + augmented.copies()) * dataset.p();
  const std::vector<int> fold_of =
      fold_assignments(dataset.y, dataset.task, grid.folds, grid.seed);

  if (options.resume_dir) std::filesystem::create_directories(*options.resume_dir);

  std::vector<SettingOutcome> outcomes(n_settings);
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto work = [&]() {
    while (true) {
      const int k = next.fetch_add(1);
      if (k >= n_settings) break;
      try {
        bool loaded = false;
        if (options.resume_dir)
          loaded = load_setting_csv(*options.resume_dir / setting_filename(k), grid.epochs,
                                    z_dim, &outcomes[k]);
        if (!loaded) {
          outcomes[k] = train_setting(dataset, augmented, grid, k, fold_of);
          if (options.resume_dir && !outcomes[k].failed)
            save_setting_csv(*options.resume_dir / setting_filename(k), outcomes[k], z_dim);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  const int workers = std::max(1, std::min(options.workers, n_settings));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (int w = 0; w < workers; ++w) threads.emplace_back(work);
    for (auto& t : threads) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  auto warn = options.warn ? options.warn
                           : [](const std::string& msg) { std::cerr << msg << '\n'; };

  std::vector<SettingInfo> settings;
  std::vector<TrajectoryRecord> records;
  int failures = 0;
  for (int k = 0; k < n_settings; ++k) {
    SettingInfo info{k, grid.lambda_of(k), grid.depth_of(k), outcomes[k].failed};
    settings.push_back(info);
    if (outcomes[k].failed) {
      ++failures;
      warn("warning: setting " + std::to_string(k) + " (lambda=" +
           format_double(info.lambda) + ", depth=" + std::to_string(info.depth) +
           ") failed and was excluded: " + outcomes[k].failure);
      continue;
    }
    for (std::size_t e = 0; e < outcomes[k].epochs.size(); ++e)
      records.push_back({k, static_cast<int>(e + 1), outcomes[k].epochs[e].cv_loss,
                         outcomes[k].epochs[e].z});
  }
  if (failures == n_settings) throw NumericError("all grid settings failed");

  return TrajectoryStore(std::move(settings), std::move(records), grid.epochs, z_dim);
}

BestModel best_cv_model(const TrajectoryStore& store) {
  if (store.empty()) throw DataError("best_cv_model: trajectory store is empty");
  const TrajectoryRecord* best = &store.records().front();
  for (const auto& rec : store.records())
    if (rec.cv_loss < best->cv_loss) best = &rec;  // store order ties to (k, e)
  return {best->setting, best->epoch, best->cv_loss, best->z};
}

void TrajectoryStore::save_manifest(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["epochs"] = epochs_;
  manifest["z_dim"] = z_dim_;
  json settings = json::array();
  for (const auto& info : settings_) {
    json s;
    s["index"] = info.index;
    s["lambda"] = info.lambda;
    s["depth"] = info.depth;
    s["failed"] = info.failed;
    settings.push_back(s);
  }
  manifest["settings"] = settings;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write trajectory manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

void TrajectoryStore::save(const std::filesystem::path& dir) const {
  save_manifest(dir);

  std::size_t cursor = 0;
  for (const auto& info : settings_) {
    if (info.failed) continue;
    SettingOutcome outcome;
    for (int e = 0; e < epochs_; ++e, ++cursor)
      outcome.epochs.push_back({records_[cursor].cv_loss, records_[cursor].z});
    save_setting_csv(dir / setting_filename(info.index), outcome, z_dim_);
  }
}

TrajectoryStore TrajectoryStore::load(const std::filesystem::path& dir) {
  json manifest;
  {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IoError("cannot open trajectory manifest in " + dir.string());
    in >> manifest;
  }
  const int epochs = manifest.at("epochs").get<int>();
  const Eigen::Index z_dim = manifest.at("z_dim").get<Eigen::Index>();

  std::vector<SettingInfo> settings;
  std::vector<TrajectoryRecord> records;
  for (const auto& s : manifest.at("settings")) {
    SettingInfo info;
    info.index = s.at("index").get<int>();
    info.lambda = s.at("lambda").get<double>();
    info.depth = s.at("depth").get<int>();
    info.failed = s.at("failed").get<bool>();
    settings.push_back(info);
    if (info.failed) continue;
    SettingOutcome outcome;
    if (!load_setting_csv(dir / setting_filename(info.index), epochs, z_dim, &outcome))
      throw DataError("trajectory store is missing " + setting_filename(info.index));
    for (int e = 0; e < epochs; ++e)
      records.push_back(
          {info.index, e + 1, outcome.epochs[e].cv_loss, outcome.epochs[e].z});
  }
  return TrajectoryStore(std::move(settings), std::move(records), epochs, z_dim);
}

}  // namespace knockens
