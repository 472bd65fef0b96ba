// Parallel kernels against their serial references on the same workloads.

#include <benchmark/benchmark.h>

#include "slm/estimators.hpp"

using namespace slm;

namespace {

const ProcessModel& gbm() {
  static const ProcessModel m = DiffusionModel{parse_expr("x", "x"), 1.0};
  return m;
}

const ProcessModel& inverse_bes3() {
  static const ProcessModel m = InverseBes3Model{1.0, InverseBes3Method::Gaussian3d};
  return m;
}

void BM_MeanCurveReference(benchmark::State& state) {
  const TimeGrid g = uniform_grid(1.0, 64);
  for (auto _ : state) benchmark::DoNotOptimize(reference::mean_curve(gbm(), g, {0.5, 1.0}, state.range(0), 1));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_MeanCurveParallel(benchmark::State& state) {
  const TimeGrid g = uniform_grid(1.0, 64);
  for (auto _ : state) benchmark::DoNotOptimize(mean_curve(gbm(), g, {0.5, 1.0}, state.range(0), 1));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

TailOptions bridge() {
  TailOptions o;
  o.sup_mode = SupMode::BridgeRefined;
  o.coarse_stride = 4;
  return o;
}

void BM_TailScanReference(benchmark::State& state) {
  const TimeGrid g = uniform_grid(1.0, 1024);
  for (auto _ : state) {
    benchmark::DoNotOptimize(reference::tail_scan(inverse_bes3(), g, 1.0, {10.0, 20.0, 50.0}, 10000, 1, bridge()));
  }
  state.SetItemsProcessed(state.iterations() * 10000);
}

void BM_TailScanParallel(benchmark::State& state) {
  const TimeGrid g = uniform_grid(1.0, 1024);
  for (auto _ : state) {
    benchmark::DoNotOptimize(tail_scan(inverse_bes3(), g, 1.0, {10.0, 20.0, 50.0}, 10000, 1, bridge()));
  }
  state.SetItemsProcessed(state.iterations() * 10000);
}

void BM_MomentScanReference(benchmark::State& state) {
  const TimeGrid g = uniform_grid(1.0, 256);
  for (auto _ : state) {
    benchmark::DoNotOptimize(reference::small_moment_scan(BrownianModel{}, g, 1.0, 0.5, {1000, 2000, 4000, 8000}, 1));
  }
  state.SetItemsProcessed(state.iterations() * 8000);
}

void BM_MomentScanParallel(benchmark::State& state) {
  const TimeGrid g = uniform_grid(1.0, 256);
  for (auto _ : state) {
    benchmark::DoNotOptimize(small_moment_scan(BrownianModel{}, g, 1.0, 0.5, {1000, 2000, 4000, 8000}, 1));
  }
  state.SetItemsProcessed(state.iterations() * 8000);
}

}  // namespace

BENCHMARK(BM_MeanCurveReference)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MeanCurveParallel)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TailScanReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TailScanParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MomentScanReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MomentScanParallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
