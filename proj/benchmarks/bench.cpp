#include <benchmark/benchmark.h>

#include "atebench/estimators.hpp"
#include "atebench/glm.hpp"
#include "atebench/sim.hpp"
#include "atebench/sloe.hpp"

namespace {

using namespace atebench;

SimulationConfig bench_config(int n, int d, Family family) {
  SimulationConfig c;
  c.n = n;
  c.d = d;
  c.family = family;
  c.seed = 7;
  return c;
}

void BM_Simulate(benchmark::State& state) {
  const auto config =
      bench_config(static_cast<int>(state.range(0)),
                   static_cast<int>(state.range(1)), Family::linear);
  int rep = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(simulate(config, rep++));
  }
}
BENCHMARK(BM_Simulate)->Args({1000, 80})->Args({4000, 320});

void BM_LogisticFit(benchmark::State& state) {
  const auto config =
      bench_config(static_cast<int>(state.range(0)),
                   static_cast<int>(state.range(1)), Family::linear);
  const Dataset data = simulate(config, 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_logistic_mle(data.x, data.w));
  }
}
BENCHMARK(BM_LogisticFit)->Args({1000, 80})->Args({4000, 320});

void BM_SurCandesSolve(benchmark::State& state) {
  const double kappa = state.range(0) / 100.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_sur_candes_system(kappa, 5.0));
  }
}
BENCHMARK(BM_SurCandesSolve)->Arg(10)->Arg(20);

void BM_SloeCorrect(benchmark::State& state) {
  const auto config =
      bench_config(static_cast<int>(state.range(0)),
                   static_cast<int>(state.range(1)), Family::linear);
  const Dataset data = simulate(config, 0);
  const GlmFit fit = fit_logistic_mle(data.x, data.w);
  const LooPredictors loo = loo_linear_predictors(fit, data.x, data.w);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sloe_correct(fit, loo));
  }
}
BENCHMARK(BM_SloeCorrect)->Args({1000, 80})->Args({4000, 320});

void BM_RepPipeline(benchmark::State& state) {
  const auto config =
      bench_config(static_cast<int>(state.range(0)),
                   static_cast<int>(state.range(1)), Family::linear);
  int rep = 0;
  for (auto _ : state) {
    const Dataset data = simulate(config, rep++);
    const NuisanceBundle bundle =
        crossfit(data, config.folds, NuisanceMethod::mle, 11);
    double total = 0.0;
    total += gcomputation(data, bundle).estimate;
    total += ipw(data, bundle).estimate;
    total += aipw(data, bundle).estimate;
    total += tmle_gaussian(data, bundle).estimate;
    benchmark::DoNotOptimize(total);
  }
}
BENCHMARK(BM_RepPipeline)->Args({1000, 80});

}  // namespace

BENCHMARK_MAIN();
