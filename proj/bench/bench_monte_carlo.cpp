// Serial reference vs OpenMP kernels: Monte-Carlo batch and the Pi update.
#include "sacl/harness.hpp"
#include "sacl/split_ekf.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

using namespace sacl;

Scenario bench_scenario() {
  Scenario sc = build_table1_scenario();
  sc.duration_s = 100.0;
  std::erase_if(sc.measurements, [](const MeasurementWindow& w) { return w.t_end > 100.0; });
  sc.dropout.windows.clear();
  return sc;
}

void BM_MonteCarloSerial(benchmark::State& state) {
  const Scenario sc = bench_scenario();
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_monte_carlo_serial(sc, static_cast<std::size_t>(state.range(0)),
                                                    EstimatorSet::all(), 7));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MonteCarloSerial)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_MonteCarloParallel(benchmark::State& state) {
  const Scenario sc = bench_scenario();
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_monte_carlo(sc, static_cast<std::size_t>(state.range(0)),
                                             EstimatorSet::all(), 7, 0));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MonteCarloParallel)->Arg(8)->Unit(benchmark::kMillisecond);

struct PiFixture {
  PiStore pi;
  GammaSet gammas;

  explicit PiFixture(std::size_t n) : pi(n) {
    std::mt19937 gen(1);
    std::normal_distribution<double> nd;
    for (Mat3& b : pi.entries.blocks()) b = Mat3::NullaryExpr([&] { return nd(gen); });
    gammas.gammas.resize(n);
    for (Mat32& g : gammas.gammas) g = Mat32::NullaryExpr([&] { return nd(gen); });
  }
};

void BM_PiUpdateSerial(benchmark::State& state) {
  const PiFixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(pi_update_serial(f.pi, f.gammas, {}));
}
BENCHMARK(BM_PiUpdateSerial)->Arg(16)->Arg(64)->Arg(256);

void BM_PiUpdateParallel(benchmark::State& state) {
  const PiFixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(pi_update(f.pi, f.gammas, {}));
}
BENCHMARK(BM_PiUpdateParallel)->Arg(16)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
