#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>

#include "knockens/ensemble.hpp"
#include "knockens/errors.hpp"
#include "oracles.hpp"

using namespace knockens;

namespace {

/// Store with one setting and the given (loss, z) records as its epochs.
TrajectoryStore store_of(const std::vector<std::pair<double, Eigen::VectorXd>>& recs) {
  std::vector<SettingInfo> settings = {{0, 0.0, 1, false}};
  std::vector<TrajectoryRecord> records;
  for (std::size_t e = 0; e < recs.size(); ++e)
    records.push_back({0, static_cast<int>(e + 1), recs[e].first, recs[e].second});
  return TrajectoryStore(std::move(settings), std::move(records),
                         static_cast<int>(recs.size()),
                         recs.empty() ? 0 : recs.front().second.size());
}

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_SUITE("ensemble") {

TEST_CASE("average_all is the elementwise mean") {
  const auto store = store_of({{1.0, vec2(1, 3)}, {2.0, vec2(3, 1)}});
  CHECK(average_all(store) == vec2(2, 2));

  const auto single = store_of({{1.0, vec2(4, 5)}});
  CHECK(average_all(single) == vec2(4, 5));

  const auto constant = store_of({{1, vec2(7, 7)}, {2, vec2(7, 7)}, {3, vec2(7, 7)}});
  CHECK(average_all(constant) == vec2(7, 7));
}

TEST_CASE("top_m selects by loss order") {
  // losses (5, 1, 3) with distinct z vectors
  const auto store = store_of({{5.0, vec2(10, 0)}, {1.0, vec2(0, 2)}, {3.0, vec2(2, 0)}});
  CHECK(top_m_average(store, 2) == vec2(1, 1));  // mean of records with loss 1 and 3
  CHECK(top_m_average(store, 1) == vec2(0, 2));  // equals the best record
  CHECK(top_m_average(store, 3) == average_all(store));
  CHECK_THROWS_AS(top_m_average(store, 4), ConfigError);
}

TEST_CASE("top_m ties resolve in (setting, epoch) order") {
  const auto store = store_of({{1.0, vec2(1, 0)}, {1.0, vec2(3, 0)}, {1.0, vec2(9, 9)}});
  CHECK(top_m_average(store, 2) == vec2(2, 0));
}

TEST_CASE("top_m is invariant to where records sit in the grid") {
  // same (loss, z) multiset, different (setting, epoch) labels
  const auto a = store_of({{5.0, vec2(10, 0)}, {1.0, vec2(0, 2)}, {3.0, vec2(2, 0)}});
  std::vector<SettingInfo> settings = {{0, 0.0, 1, false}, {1, 0.1, 1, false},
                                       {2, 0.2, 1, false}};
  std::vector<TrajectoryRecord> records = {{0, 1, 3.0, vec2(2, 0)},
                                           {1, 1, 5.0, vec2(10, 0)},
                                           {2, 1, 1.0, vec2(0, 2)}};
  const TrajectoryStore b(std::move(settings), std::move(records), 1, 2);
  CHECK(top_m_average(a, 2) == top_m_average(b, 2));
}

TEST_CASE("leverage of orthonormal rows") {
  Eigen::MatrixXd z(3, 2);
  z << 1, 0, 0, 1, 0, 0;
  const Eigen::VectorXd h = leverage_scores(z);
  CHECK(h(0) == doctest::Approx(1.0));
  CHECK(h(1) == doctest::Approx(1.0));
  CHECK(h(2) == doctest::Approx(0.0));
}

TEST_CASE("leverage of a rank-1 column by hand") {
  // SVD of [[1],[1]] has U = (1/sqrt(2), 1/sqrt(2)); h = (0.5, 0.5)
  Eigen::MatrixXd z(2, 1);
  z << 1, 1;
  const Eigen::VectorXd h = leverage_scores(z);
  CHECK(h(0) == doctest::Approx(0.5));
  CHECK(h(1) == doctest::Approx(0.5));
}

TEST_CASE("leverage sums to the rank and stays in [0,1]") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int it = 0; it < 20; ++it) {
    Eigen::MatrixXd z(10, 4);
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
    if (it % 3 == 0) z.col(3) = 2.0 * z.col(0);  // rank deficiency
    const Eigen::VectorXd h = leverage_scores(z);
    CHECK(h.minCoeff() >= -1e-12);
    CHECK(h.maxCoeff() <= 1.0 + 1e-12);
    CHECK(h.sum() == doctest::Approx(double(oracles::svd_rank(z))).epsilon(1e-9));
  }
}

TEST_CASE("leverage handles more columns than rows") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd z(3, 8);
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
  const Eigen::VectorXd h = leverage_scores(z);
  CHECK(h.sum() == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("leverage is scale invariant") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd z(6, 3);
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
  const Eigen::VectorXd h = leverage_scores(z);
  for (double c : {0.001, -2.0, 1e6})
    CHECK((leverage_scores((c * z).eval()) - h).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("leverage rejects the all-zero matrix") {
  CHECK_THROWS_AS(leverage_scores(Eigen::MatrixXd::Zero(4, 3)), DataError);
}

TEST_CASE("m-influential: identical rows make every sample the same mean") {
  const auto store = store_of({{1, vec2(2, 5)}, {2, vec2(2, 5)}, {3, vec2(2, 5)}});
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto result = m_influential_average(store, 2, std::nullopt, seed);
    CHECK(result.z == vec2(2, 5));
  }
}

TEST_CASE("m-influential never samples zero-leverage records") {
  // rows (1,0), (0,1), (0,0): leverage (1,1,0); m=2 must always pick 0 and 1
  const auto store = store_of({{1, vec2(1, 0)}, {2, vec2(0, 1)}, {3, vec2(0, 0)}});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto result = m_influential_average(store, 2, std::nullopt, seed);
    CHECK(result.chosen_records == std::vector<int>{0, 1});
    CHECK(result.z == vec2(0.5, 0.5));
  }
  // m=3 would need a third positive-leverage record
  CHECK_THROWS_AS(m_influential_average(store, 3, std::nullopt, 1), ConfigError);
}

TEST_CASE("percentile filter keeps the lowest-q% of losses") {
  std::vector<std::pair<double, Eigen::VectorXd>> recs;
  for (int i = 1; i <= 100; ++i) recs.push_back({double(i), vec2(double(i), 1.0)});
  const auto store = store_of(recs);
  const auto result = m_influential_average(store, 10, 25.0, 4);
  for (int idx : result.chosen_records) CHECK(store.records()[idx].cv_loss <= 25.0);

  // the filter leaves 25 records, so m = 26 must fail
  CHECK_THROWS_AS(m_influential_average(store, 26, 25.0, 4), ConfigError);
}

TEST_CASE("m-influential is deterministic under the seed") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::pair<double, Eigen::VectorXd>> recs;
  for (int i = 0; i < 30; ++i) recs.push_back({unif(rng), vec2(unif(rng), unif(rng))});
  const auto store = store_of(recs);
  const auto a = m_influential_average(store, 5, std::nullopt, 99);
  const auto b = m_influential_average(store, 5, std::nullopt, 99);
  CHECK(a.chosen_records == b.chosen_records);
  CHECK(a.z == b.z);
}

TEST_CASE("ensemble outputs stay nonnegative for nonnegative records") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> unif(0.0, 2.0);
  std::vector<std::pair<double, Eigen::VectorXd>> recs;
  for (int i = 0; i < 25; ++i) recs.push_back({unif(rng), vec2(unif(rng), unif(rng))});
  const auto store = store_of(recs);
  CHECK(average_all(store).minCoeff() >= 0.0);
  CHECK(top_m_average(store, 7).minCoeff() >= 0.0);
  CHECK(m_influential_average(store, 7, std::nullopt, 1).z.minCoeff() >= 0.0);
}

TEST_CASE("build_ensemble dispatch covers every strategy") {
  const auto store = store_of({{5.0, vec2(10, 0)}, {1.0, vec2(0, 2)}, {3.0, vec2(2, 0)}});
  EnsembleSpec spec;
  spec.strategy = EnsembleStrategy::best;
  CHECK(build_ensemble(store, spec).z == vec2(0, 2));
  CHECK(build_ensemble(store, spec).chosen_records == std::vector<int>{1});
  spec.strategy = EnsembleStrategy::avg;
  CHECK(build_ensemble(store, spec).z == average_all(store));
  spec.strategy = EnsembleStrategy::top_m;
  spec.m = 2;
  CHECK(build_ensemble(store, spec).z == top_m_average(store, 2));
  CHECK(build_ensemble(store, spec).chosen_records == std::vector<int>{1, 2});
  spec.strategy = EnsembleStrategy::m_influential;
  spec.m = 1;
  spec.seed = 3;
  CHECK(build_ensemble(store, spec).z.size() == 2);
}

TEST_CASE("strategy names round-trip") {
  for (auto s : {EnsembleStrategy::best, EnsembleStrategy::avg, EnsembleStrategy::top_m,
                 EnsembleStrategy::m_influential})
    CHECK(strategy_from_name(strategy_name(s)) == s);
  CHECK(strategy_from_name("m_inf") == EnsembleStrategy::m_influential);
  CHECK_THROWS_AS(strategy_from_name("bogus"), ConfigError);
}

TEST_CASE("ensemble CSV + metadata round trip") {
  const auto store = store_of({{5.0, vec2(10, 0)}, {1.0, vec2(0, 2)}});
  EnsembleSpec spec;
  spec.strategy = EnsembleStrategy::top_m;
  spec.m = 1;
  const EnsembleResult result = build_ensemble(store, spec);

  const auto dir = std::filesystem::temp_directory_path() / "knockens_ens_roundtrip";
  std::filesystem::create_directories(dir);
  save_ensemble(result, spec, dir / "z.csv", dir / "z.json");
  CHECK(load_ensemble_csv(dir / "z.csv") == result.z);
  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
