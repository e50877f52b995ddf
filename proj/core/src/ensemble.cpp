#include "knockens/ensemble.hpp"

#include <Eigen/SVD>
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

std::string strategy_name(EnsembleStrategy s) {
  switch (s) {
    case EnsembleStrategy::best: return "best";
    case EnsembleStrategy::avg: return "avg";
    case EnsembleStrategy::top_m: return "top_m";
    case EnsembleStrategy::m_influential: return "m_influential";
  }
  return "unknown";
}

EnsembleStrategy strategy_from_name(const std::string& name) {
  if (name == "best") return EnsembleStrategy::best;
  if (name == "avg") return EnsembleStrategy::avg;
  if (name == "top_m") return EnsembleStrategy::top_m;
  if (name == "m_influential" || name == "m_inf") return EnsembleStrategy::m_influential;
  throw ConfigError("unknown ensemble strategy '" + name + "'");
}

Eigen::VectorXd average_all(const TrajectoryStore& store) {
  if (store.empty()) throw DataError("ensemble: trajectory store is empty");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(store.z_dim());
  for (const auto& rec : store.records()) sum += rec.z;
  return sum / double(store.record_count());
}

namespace {

/// Record indices ordered by ascending cv_loss, ties in (setting, epoch) order.
/// Store order already is (setting, epoch), so a stable sort suffices.
std::vector<int> loss_order(const TrajectoryStore& store) {
  std::vector<int> order(store.record_count());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return store.records()[a].cv_loss < store.records()[b].cv_loss;
  });
  return order;
}

}  // namespace

Eigen::VectorXd top_m_average(const TrajectoryStore& store, int m) {
  if (store.empty()) throw DataError("ensemble: trajectory store is empty");
  if (m < 1) throw ConfigError("ensemble: m must be >= 1");
  if (m > store.record_count())
    throw ConfigError("ensemble: m = " + std::to_string(m) + " exceeds the " +
                      std::to_string(store.record_count()) + " available records");
  const std::vector<int> order = loss_order(store);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(store.z_dim());
  for (int i = 0; i < m; ++i) sum += store.records()[order[i]].z;
  return sum / double(m);
}

Eigen::VectorXd leverage_scores(const Eigen::MatrixXd& z_matrix) {
  if (z_matrix.rows() < 1 || z_matrix.cols() < 1)
    throw DataError("leverage: empty importance matrix");

  Eigen::BDCSVD<Eigen::MatrixXd> svd(z_matrix, Eigen::ComputeThinU);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double sigma_max = sv.size() > 0 ? sv(0) : 0.0;
  if (sigma_max <= 0.0) throw DataError("leverage: all-zero importance matrix");

  Eigen::Index rank = 0;
  while (rank < sv.size() && sv(rank) >= 1e-10 * sigma_max) ++rank;
  return svd.matrixU().leftCols(rank).rowwise().squaredNorm();
}

EnsembleResult m_influential_average(const TrajectoryStore& store, int m,
                                     std::optional<double> percentile_filter,
                                     std::uint64_t seed) {
  if (store.empty()) throw DataError("ensemble: trajectory store is empty");
  if (m < 1) throw ConfigError("ensemble: m must be >= 1");

  // optional restriction to the lowest-q% of CV loss: keep every record with
  // loss <= the ceil(q% * N)-th smallest loss
  std::vector<int> eligible(store.record_count());
  std::iota(eligible.begin(), eligible.end(), 0);
  if (percentile_filter) {
    const double q = *percentile_filter;
    if (q <= 0.0 || q > 100.0)
      throw ConfigError("ensemble: percentile filter must be in (0, 100]");
    const long keep_rank =
        std::max(1L, static_cast<long>(std::ceil(q / 100.0 * double(store.record_count()))));
    std::vector<double> losses;
    losses.reserve(store.record_count());
    for (const auto& rec : store.records()) losses.push_back(rec.cv_loss);
    std::nth_element(losses.begin(), losses.begin() + (keep_rank - 1), losses.end());
    const double cutoff = losses[keep_rank - 1];
    std::vector<int> filtered;
    for (int i = 0; i < store.record_count(); ++i)
      if (store.records()[i].cv_loss <= cutoff) filtered.push_back(i);
    eligible = std::move(filtered);
  }
  if (static_cast<int>(eligible.size()) < m)
    throw ConfigError("ensemble: only " + std::to_string(eligible.size()) +
                      " records remain after the percentile filter, need m = " +
                      std::to_string(m));

  Eigen::MatrixXd z(eligible.size(), store.z_dim());
  for (std::size_t i = 0; i < eligible.size(); ++i)
    z.row(i) = store.records()[eligible[i]].z.transpose();

  Eigen::VectorXd weights = leverage_scores(z);
  weights /= weights.sum();

  long positive = (weights.array() > 0.0).count();
  if (positive < m)
    throw ConfigError("ensemble: only " + std::to_string(positive) +
                      " records carry positive leverage, need m = " + std::to_string(m));

  // sequential weighted draws without replacement, renormalizing each time
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<int> pool(eligible.size());
  std::iota(pool.begin(), pool.end(), 0);
  double remaining_weight = weights.sum();

  EnsembleResult result;
  result.z = Eigen::VectorXd::Zero(store.z_dim());
  for (int draw = 0; draw < m; ++draw) {
    const double u = unif(rng) * remaining_weight;
    double acc = 0.0;
    std::size_t pick = pool.size() - 1;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      acc += weights(pool[i]);
      if (u <= acc) {
        pick = i;
        break;
      }
    }
    const int local = pool[pick];
    result.chosen_records.push_back(eligible[local]);
    result.z += store.records()[eligible[local]].z;
    remaining_weight -= weights(local);
    pool.erase(pool.begin() + static_cast<long>(pick));
  }
  result.z /= double(m);
  std::sort(result.chosen_records.begin(), result.chosen_records.end());
  return result;
}

EnsembleResult build_ensemble(const TrajectoryStore& store, const EnsembleSpec& spec) {
  EnsembleResult result;
  switch (spec.strategy) {
    case EnsembleStrategy::best: {
      const BestModel best = best_cv_model(store);
      result.z = best.z;
      for (int i = 0; i < store.record_count(); ++i) {
        const auto& rec = store.records()[i];
        if (rec.setting == best.setting && rec.epoch == best.epoch) {
          result.chosen_records.push_back(i);
          break;
        }
      }
      return result;
    }
    case EnsembleStrategy::avg:
      result.z = average_all(store);
      return result;
    case EnsembleStrategy::top_m: {
      result.z = top_m_average(store, spec.m);
      const std::vector<int> order = loss_order(store);
      result.chosen_records.assign(order.begin(), order.begin() + spec.m);
      std::sort(result.chosen_records.begin(), result.chosen_records.end());
      return result;
    }
    case EnsembleStrategy::m_influential:
      return m_influential_average(store, spec.m, spec.percentile_filter, spec.seed);
  }
  throw ConfigError("unknown ensemble strategy");
}

void save_ensemble(const EnsembleResult& result, const EnsembleSpec& spec,
                   const std::filesystem::path& csv_path,
                   const std::filesystem::path& meta_path) {
  Eigen::MatrixXd table(result.z.size(), 2);
  for (Eigen::Index i = 0; i < result.z.size(); ++i) {
    table(i, 0) = double(i + 1);
    table(i, 1) = result.z(i);
  }
  write_csv(csv_path, {"index", "z"}, table);

  json meta;
  meta["strategy"] = strategy_name(spec.strategy);
  meta["m"] = spec.m;
  meta["seed"] = spec.seed;
  if (spec.percentile_filter) meta["percentile_filter"] = *spec.percentile_filter;
  meta["chosen_records"] = result.chosen_records;
  std::ofstream out(meta_path);
  if (!out) throw IoError("cannot write ensemble metadata: " + meta_path.string());
  out << meta.dump(2) << '\n';
}

Eigen::VectorXd load_ensemble_csv(const std::filesystem::path& csv_path) {
  const CsvTable table = read_csv(csv_path);
  const int z_col = table.column_index("z");
  if (z_col < 0) throw DataError("ensemble CSV is missing the z column: " + csv_path.string());
  return table.values.col(z_col);
}

}  // namespace knockens
