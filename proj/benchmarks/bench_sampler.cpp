#include <benchmark/benchmark.h>

#include "stsb/datagen.hpp"
#include "stsb/gp_atoms.hpp"
#include "stsb/mcmc.hpp"

using namespace stsb;

namespace {

// One full sweep on the regime scenario; range(0) = locations per time point,
// range(1) = truncation.
void BM_Sweep(benchmark::State& state) {
  Rng rng(3);
  const Dataset d = scenario_regime(static_cast<std::size_t>(state.range(0)), 24, 0.2, rng);
  McmcConfig cfg;
  cfg.truncation = static_cast<std::size_t>(state.range(1));
  BlockedGibbsSampler s(d, HyperPriors{}, cfg, KernelKind::Gneiting);
  s.initialize(rng);
  for (auto _ : state) s.sweep(rng);
  state.counters["obs"] = static_cast<double>(d.size());
}
BENCHMARK(BM_Sweep)->Args({20, 30})->Args({200, 30})->Args({200, 100})->Unit(benchmark::kMillisecond);

void BM_SweepVaryingAtoms(benchmark::State& state) {
  Rng rng(4);
  const Dataset d = scenario_regime(static_cast<std::size_t>(state.range(0)), 10, 0.2, rng);
  McmcConfig cfg;
  cfg.truncation = 10;
  VaryingAtomsSampler s(d, HyperPriors{}, cfg, KernelKind::Gneiting, {});
  s.initialize(rng);
  for (auto _ : state) s.sweep(rng);
}
BENCHMARK(BM_SweepVaryingAtoms)->Arg(10)->Arg(30)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
