#include <benchmark/benchmark.h>

#include "stsb/kernels.hpp"
#include "stsb/random.hpp"
#include "stsb/stickbreak.hpp"

using namespace stsb;

namespace {

StickState random_sticks(std::size_t m, KernelKind kind, Rng& rng) {
  StickState st;
  st.kind = kind;
  st.shape.h1 = st.shape.h2 = 0.25;
  st.shape.ht = 3.0;
  st.shape.gamma = 1.0;
  st.shape.lambda = 0.5;
  for (std::size_t k = 0; k < m; ++k) {
    st.v.push_back(rnd::beta(rng, 1.0, 1.0));
    st.knots.push_back({rnd::uniform(rng), rnd::uniform(rng), rnd::uniform(rng, 1.0, 24.0)});
  }
  return st;
}

void BM_KernelEval(benchmark::State& state) {
  const auto kind = static_cast<KernelKind>(state.range(0));
  KernelShape sh;
  sh.h1 = sh.h2 = 0.25;
  sh.ht = 3.0;
  sh.lambda = 0.5;
  const Knot knot{0.4, 0.6, 5.0};
  double s1 = 0.1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval_at(kind, s1, 0.3, 7.0, knot, sh));
    s1 += 1e-9;
  }
}
BENCHMARK(BM_KernelEval)->Arg(0)->Arg(1)->Arg(2);

void BM_ComputeWeights(benchmark::State& state) {
  Rng rng(1);
  const StickState st = random_sticks(static_cast<std::size_t>(state.range(0)), KernelKind::Gneiting, rng);
  std::vector<double> pi(st.size());
  for (auto _ : state) benchmark::DoNotOptimize(compute_weights_into(st, 0.5, 0.5, 12.0, pi));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ComputeWeights)->RangeMultiplier(4)->Range(16, 1024)->Complexity(benchmark::oN);

void BM_GMonteCarlo(benchmark::State& state) {
  Rng rng(2);
  KernelShape sh;
  sh.gamma = 1.0;
  sh.lambda = 0.5;
  const SpaceTimeDomain dom{{0, 1}, {0, 1}, 10};
  for (auto _ : state) {
    benchmark::DoNotOptimize(g_mc(KernelKind::Gneiting, sh, dom, {0.2, 0.2}, {0.4, 0.5}, 3, 5, 10000, rng));
  }
}
BENCHMARK(BM_GMonteCarlo);

}  // namespace

BENCHMARK_MAIN();
