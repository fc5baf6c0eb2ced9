// Serial reference kernels against their OpenMP counterparts.
#include "clvlab/analysis.hpp"
#include "clvlab/clv.hpp"
#include "clvlab/cocycle.hpp"
#include "clvlab/dynsys.hpp"
#include "clvlab/fembv.hpp"

#include <benchmark/benchmark.h>

#include <optional>

using namespace clvlab;

namespace {

const TimeSeries& lorenz() {
  static const TimeSeries traj = simulate(lorenz63(), Vec::Ones(3), 0.01, 4000, 10000);
  return traj;
}

const CocycleSource& lorenz_source() {
  static const CocycleSource src = analytic_cocycle(lorenz63(), lorenz());
  return src;
}

const CocycleSource& var_source() {
  static std::optional<CocycleSource> src;
  if (!src) {
    FemBvOptions o;
    o.K = 2;
    o.m = 3;
    o.p = 29.0;
    o.restarts = 2;
    o.seed = 1;
    src.emplace(var_cocycle(fit_fembv(lorenz(), o), lorenz()));
  }
  return *src;
}

Execution mode(const benchmark::State& state) {
  return state.range(0) == 0 ? Execution::serial : Execution::parallel;
}

void BM_AnalyticCocycle(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(analytic_cocycle(lorenz63(), lorenz(), mode(state)));
}

void BM_ClvSeries(benchmark::State& state) {
  const auto p = ClvParams::symmetric(50, 10);
  const auto cov = clv_coverage(lorenz_source(), p);
  for (auto _ : state) {
    benchmark::DoNotOptimize(clv_series(lorenz_source(), {cov.begin, cov.begin + 1000, 1}, p, mode(state)));
  }
}

void BM_GridSearch(benchmark::State& state) {
  const auto wings = wing_labels(lorenz());
  GridMetricSpec spec;
  spec.states = wings;
  spec.j = 1;
  const std::vector<long> Ns = {5, 20, 50};
  const std::vector<long> ns = {1, 10};
  const auto& src = var_source();  // built outside the timed loop
  for (auto _ : state) {
    benchmark::DoNotOptimize(gridsearch(src, {300, 3500, 20}, Ns, ns, spec, mode(state)));
  }
}

void BM_FitFembv(benchmark::State& state) {
  FemBvOptions o;
  o.K = 2;
  o.m = 1;
  o.p = 29.0;
  o.restarts = 4;
  o.seed = 3;
  o.execution = mode(state);
  for (auto _ : state) benchmark::DoNotOptimize(fit_fembv(lorenz(), o));
}

}  // namespace

// Argument 0 = serial reference, 1 = OpenMP.
BENCHMARK(BM_AnalyticCocycle)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ClvSeries)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GridSearch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FitFembv)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
