#include <benchmark/benchmark.h>

#include <random>

#include "otadmm/baselines.hpp"
#include "otadmm/distributed.hpp"
#include "otadmm/experiments.hpp"
#include "otadmm/local_qp.hpp"

using namespace otadmm;

namespace {

MassProblem marginals(std::size_t n) {
  auto [a, b] = random_marginals(n, 1);
  return MassProblem::from_marginals(std::move(a), std::move(b));
}

void BM_BoxQPRankOne(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> d(n), q(n), lo(n, 0.0), hi(n, 1.0);
  for (std::size_t k = 0; k < n; ++k) {
    d[k] = u(rng) > 0 ? 1.0 : (u(rng) > 0 ? -1.0 : 0.0);
    q[k] = 3.0 * u(rng);
  }
  // agent-like conditioning: the shift is at least the incidence row's support
  double support = 0.0;
  for (double v : d) support += v * v;
  const BoxQP qp = BoxQP::shifted_rank_one(support + 0.1, d, q, lo, hi);
  for (auto _ : state) benchmark::DoNotOptimize(solve_box_qp(qp, 1e-8));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_BoxQPRankOne)->RangeMultiplier(4)->Range(8, 2048)->Complexity();

void BM_EngineRound(benchmark::State& state) {
  const auto kind = static_cast<GraphKind>(state.range(0));
  const auto threads = static_cast<std::size_t>(state.range(1));
  const DirectedGraph g = generate(kind, 20, 1.0, 100.0);
  SolverConfig c;
  c.gamma = 0.05;
  DistributedEngine engine(g, marginals(20), c, threads);
  for (auto _ : state) benchmark::DoNotOptimize(engine.round());
  state.SetLabel(to_string(kind));
}
BENCHMARK(BM_EngineRound)
    ->ArgsProduct({{static_cast<long>(GraphKind::kRing), static_cast<long>(GraphKind::kComplete)},
                   {1, 4}});

void BM_CentralizedAdmm(benchmark::State& state) {
  const DirectedGraph g = generate(GraphKind::kComplete, static_cast<std::size_t>(state.range(0)),
                                   1.0, 100.0);
  SolverConfig c;
  c.gamma = 0.05;
  const MassProblem p = marginals(g.node_count());
  for (auto _ : state) benchmark::DoNotOptimize(centralized_admm(g, p, c));
}
BENCHMARK(BM_CentralizedAdmm)->Arg(6)->Arg(12);

void BM_Sinkhorn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix cost(n, n);
  for (double& v : cost.data) v = u(rng);
  auto [a, b] = random_marginals(n, 3);
  const double gamma = static_cast<double>(state.range(1)) / 100.0;
  for (auto _ : state) benchmark::DoNotOptimize(sinkhorn(cost, a, b, gamma));
}
BENCHMARK(BM_Sinkhorn)->ArgsProduct({{5, 50}, {1, 100}});

}  // namespace
BENCHMARK_MAIN();
