#include <benchmark/benchmark.h>

#include "knockens/network.hpp"
#include "knockens/rng.hpp"

using namespace knockens;

namespace {

NetworkConfig bench_config(int p, int depth) {
  NetworkConfig cfg;
  cfg.p = p;
  cfg.copies = 1;
  cfg.depth = depth;
  cfg.hidden = 25;
  cfg.lambda = 1e-3;
  cfg.seed = 1;
  return cfg;
}

void BM_TrainStep(benchmark::State& state) {
  const int p = static_cast<int>(state.range(0));
  const NetworkConfig cfg = bench_config(p, static_cast<int>(state.range(1)));
  Network net(cfg);
  Rng rng(2);
  const Eigen::MatrixXd x = gaussian_matrix(32, cfg.input_dim(), rng);
  const Eigen::VectorXd y = gaussian_vector(32, rng);
  for (auto _ : state) benchmark::DoNotOptimize(net.train_step(x, nullptr, y, 1e-3));
}

void BM_InputGradientImportance(benchmark::State& state) {
  const int p = static_cast<int>(state.range(0));
  const NetworkConfig cfg = bench_config(p, 1);
  Network net(cfg);
  Rng rng(3);
  const Eigen::MatrixXd x = gaussian_matrix(500, cfg.input_dim(), rng);
  for (auto _ : state) benchmark::DoNotOptimize(net.input_gradient_importance(x, nullptr));
}

}  // namespace

BENCHMARK(BM_TrainStep)->Args({100, 1})->Args({100, 3})->Args({500, 1});
BENCHMARK(BM_InputGradientImportance)->Arg(100)->Arg(500);
