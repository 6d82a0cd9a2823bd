#include <benchmark/benchmark.h>

#include "planner/analysis.h"
#include "planner/dpftrl.h"
#include "planner/evidence_chain.h"
#include "planner/simulator.h"

namespace {

using namespace planner;

void BM_OptimizeDefaults(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(optimize_params(10'000'000, 0.1, 1.0, 0.1, 10'000, 1e-8, 1e-8));
  }
}
BENCHMARK(BM_OptimizeDefaults)->Unit(benchmark::kMillisecond);

void BM_HypergeometricTail(benchmark::State& state) {
  auto draws = static_cast<std::uint64_t>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(hypergeometric_tail(10'000'000, 1'000'000, draws, draws / 3));
  }
}
BENCHMARK(BM_HypergeometricTail)->Arg(20)->Arg(200)->Arg(2000);

void BM_CorrelatedNoise(benchmark::State& state) {
  auto rounds = static_cast<std::size_t>(state.range(0));
  StrategyMatrix c = StrategyMatrix::sqrt_prefix(rounds);
  NoiseMatrix z(7, 1.0, 64);
  for (auto _ : state) {
    benchmark::DoNotOptimize(correlated_noise(z, c, static_cast<RoundIndex>(rounds - 1), 1.0));
  }
}
BENCHMARK(BM_CorrelatedNoise)->Arg(16)->Arg(128);

RunResult honest_run(std::uint32_t rounds) {
  WorldConfig cfg;
  cfg.n = 40;
  cfg.n_round = rounds;
  cfg.schema = ParticipationSchema::once(rounds);
  return run(cfg);
}

void BM_SimulateHonest(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(honest_run(static_cast<std::uint32_t>(state.range(0))));
}
BENCHMARK(BM_SimulateHonest)->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_VerifyChain(benchmark::State& state) {
  RunResult r = honest_run(10);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        verify_chain(r.chain, r.witness.manufacturer_pk, planner_code_id()));
  }
}
BENCHMARK(BM_VerifyChain);

void BM_CheckLinearizable(benchmark::State& state) {
  WorldConfig cfg;
  cfg.n = 40;
  cfg.n_round = 10;
  cfg.schema = ParticipationSchema::once(10);
  cfg.adversary.strategy = AdversaryStrategy::kFork;
  RunResult r = run(cfg);
  for (auto _ : state) benchmark::DoNotOptimize(check_linearizable(r.log));
}
BENCHMARK(BM_CheckLinearizable);

}  // namespace

BENCHMARK_MAIN();
