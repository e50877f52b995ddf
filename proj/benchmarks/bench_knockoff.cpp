#include <benchmark/benchmark.h>

#include "knockens/knockoff.hpp"
#include "knockens/rng.hpp"

using namespace knockens;

namespace {

Eigen::MatrixXd standard_data(int n, int p, std::uint64_t seed) {
  Rng rng(seed);
  return gaussian_matrix(n, p, rng);
}

void BM_FitGaussianModel(benchmark::State& state) {
  const int p = static_cast<int>(state.range(0));
  const Eigen::MatrixXd x = standard_data(4 * p, p, 1);
  for (auto _ : state) benchmark::DoNotOptimize(fit_gaussian_model(x, 1));
}

void BM_SampleSingleKnockoffs(benchmark::State& state) {
  const int p = static_cast<int>(state.range(0));
  const Eigen::MatrixXd x = standard_data(500, p, 2);
  const KnockoffModel model = fit_gaussian_model(x, 1);
  std::uint64_t seed = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(sample_single_knockoffs(x, model, ++seed));
}

void BM_SampleScitKnockoffs(benchmark::State& state) {
  const int p = static_cast<int>(state.range(0));
  const int copies = static_cast<int>(state.range(1));
  const Eigen::MatrixXd x = standard_data(200, p, 3);
  KnockoffModel model = fit_gaussian_model(x, copies);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sample_scit_knockoffs(x, model, ++seed));
}

}  // namespace

BENCHMARK(BM_FitGaussianModel)->Arg(50)->Arg(100)->Arg(200);
BENCHMARK(BM_SampleSingleKnockoffs)->Arg(50)->Arg(100)->Arg(200);
BENCHMARK(BM_SampleScitKnockoffs)->Args({20, 1})->Args({20, 5})->Args({50, 2});
