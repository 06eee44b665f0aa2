#include <benchmark/benchmark.h>

#include "rsdbpf/filters.hpp"
#include "rsdbpf/training.hpp"

namespace {

using namespace rsdbpf;

void BM_RsPfOracle(benchmark::State& state) {
  const ModelSuite suite = benchmark_suite(DynamicsKind::kMarkov);
  const Trajectory traj = simulate(suite, 7);
  const FilterConfig cfg = FilterConfig::with_particles(static_cast<int>(state.range(0)));
  Rng rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(run_rs_pf(suite, traj.observations, cfg, rng));
}
BENCHMARK(BM_RsPfOracle)->Arg(200)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_RsDbpfEval(benchmark::State& state) {
  const ModelSuite suite = benchmark_suite(DynamicsKind::kMarkov);
  const Trajectory traj = simulate(suite, 7);
  const NeuralRegimeSet nets = init_params(3, 8);
  const FilterConfig cfg = FilterConfig::with_particles(static_cast<int>(state.range(0)));
  Rng rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(run_rs_dbpf(nets, suite.dynamics, traj.observations, cfg, rng));
}
BENCHMARK(BM_RsDbpfEval)->Arg(200)->Arg(2000)->Unit(benchmark::kMillisecond);

// Forward + backward of one training trajectory.
void BM_RsDbpfTrainStep(benchmark::State& state) {
  const ModelSuite suite = benchmark_suite(DynamicsKind::kPolya);
  const Trajectory traj = simulate(suite, 7);
  const NeuralRegimeSet nets = init_params(3, 8);
  const FilterConfig cfg = FilterConfig::with_particles(static_cast<int>(state.range(0)));
  std::vector<double> grad(nets.param_count());
  ad::Tape tape;
  Rng rng(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(trajectory_loss_and_gradient(LearnedFilter::kRsDbpf, nets, suite.dynamics, traj, cfg,
                                                          rng, tape, grad, 1.0));
  }
  state.counters["nodes"] = static_cast<double>(tape.size());
  state.counters["edges"] = static_cast<double>(tape.edge_count());
}
BENCHMARK(BM_RsDbpfTrainStep)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_TapeBackward(benchmark::State& state) {
  for (auto _ : state) {
    ad::Tape tape;
    ad::Var x = tape.leaf(0.3);
    ad::Var acc = x;
    for (int i = 0; i < state.range(0); ++i) acc = ad::tanh(acc * x + 0.1);
    benchmark::DoNotOptimize(tape.backward(acc, std::span<const ad::Var>(&x, 1)));
  }
}
BENCHMARK(BM_TapeBackward)->Arg(10000);

}  // namespace
BENCHMARK_MAIN();
