#include <benchmark/benchmark.h>

#include <random>

#include "knockens/ensemble.hpp"
#include "knockens/selection.hpp"

using namespace knockens;

namespace {

void BM_SingleThreshold(benchmark::State& state) {
  const int p = static_cast<int>(state.range(0));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd w(p);
  for (int j = 0; j < p; ++j) w(j) = normal(rng);
  for (auto _ : state) benchmark::DoNotOptimize(single_knockoff_threshold(w, 0.2));
}

void BM_MultipleThreshold(benchmark::State& state) {
  const int p = static_cast<int>(state.range(0));
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> kappa_dist(0, 5);
  Eigen::VectorXi kappa(p);
  Eigen::VectorXd tau(p);
  for (int j = 0; j < p; ++j) {
    kappa(j) = kappa_dist(rng);
    tau(j) = std::abs(normal(rng));
  }
  for (auto _ : state)
    benchmark::DoNotOptimize(multiple_knockoff_threshold(kappa, tau, 5, 0.2));
}

void BM_LeverageScores(benchmark::State& state) {
  const int records = static_cast<int>(state.range(0));
  const int dim = static_cast<int>(state.range(1));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd z(records, dim);
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = std::abs(normal(rng));
  for (auto _ : state) benchmark::DoNotOptimize(leverage_scores(z));
}

}  // namespace

BENCHMARK(BM_SingleThreshold)->Arg(500)->Arg(5000);
BENCHMARK(BM_MultipleThreshold)->Arg(500)->Arg(5000);
BENCHMARK(BM_LeverageScores)->Args({2000, 200})->Args({500, 1000});

BENCHMARK_MAIN();
