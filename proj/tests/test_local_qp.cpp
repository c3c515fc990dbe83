#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "otadmm/errors.hpp"
#include "otadmm/local_qp.hpp"

using namespace otadmm;

namespace {

constexpr double kInf = kInfiniteCapacity;

// Random SPD matrix B'B + mu I, dim n.
std::vector<double> random_spd(std::mt19937_64& rng, std::size_t n) {
  std::vector<double> b(n * n);
  for (double& v : b) v = oracle::uniform(rng, -1.0, 1.0);
  std::vector<double> h(n * n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      for (std::size_t k = 0; k < n; ++k) h[r * n + c] += b[k * n + r] * b[k * n + c];
    }
    h[r * n + r] += oracle::uniform(rng, 0.2, 1.5);
  }
  return h;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, std::abs(a[k] - b[k]));
  return d;
}

}  // namespace

TEST(BoxQP, Examples) {
  // separable projection
  const auto sep = BoxQP::dense({1, 0, 0, 1}, {-2, 3}, {0, 0}, {kInf, kInf});
  EXPECT_EQ(solve_box_qp(sep, 1e-12).x, (std::vector<double>{2, 0}));

  const auto one = BoxQP::shifted_rank_one(1.0, {1.0}, {-0.9}, {0.0}, {10.0});
  EXPECT_NEAR(solve_box_qp(one, 1e-12).x[0], 0.45, 1e-12);

  const auto two = BoxQP::dense({2, 1, 1, 2}, {-1, -1}, {0, 0}, {0.25, 0.25});
  const auto sol = solve_box_qp(two, 1e-10);
  EXPECT_NEAR(sol.x[0], 0.25, 1e-12);
  EXPECT_NEAR(sol.x[1], 0.25, 1e-12);
  const auto grid = oracle::box_qp_grid({2, 1, 1, 2}, {-1, -1}, {0, 0}, {0.25, 0.25}, 1e-4);
  EXPECT_NEAR(grid[0], 0.25, 1e-9);
  EXPECT_NEAR(grid[1], 0.25, 1e-9);
}

TEST(BoxQP, KktResidualExamples) {
  EXPECT_DOUBLE_EQ(kkt_residual(BoxQP::dense({1}, {0}, {0}, {1}), std::vector<double>{1}), 1.0);
  EXPECT_DOUBLE_EQ(kkt_residual(BoxQP::dense({1}, {-2}, {0}, {1}), std::vector<double>{1}), 0.0);
  const auto qp = BoxQP::shifted_rank_one(2.0, {1, -1}, {-1, 0.5}, {0, 0}, {1, 1});
  EXPECT_LE(kkt_residual(qp, solve_box_qp(qp, 1e-13).x), 1e-12);
}

TEST(BoxQP, RejectsBadInstances) {
  EXPECT_THROW(BoxQP::dense({1, 2, 0, 1}, {0, 0}, {0, 0}, {1, 1}), InvalidInput);  // asymmetric
  EXPECT_THROW(BoxQP::dense({1, 2, 2, 1}, {0, 0}, {0, 0}, {1, 1}), InvalidInput);  // indefinite
  EXPECT_THROW(BoxQP::dense({1}, {0}, {1}, {0}), InvalidInput);                    // lower > upper
  EXPECT_THROW(BoxQP::dense({1, 0, 0, 1}, {0}, {0}, {1}), DimensionError);
  EXPECT_THROW(BoxQP::shifted_rank_one(0.0, {1}, {0}, {0}, {1}), InvalidInput);
  EXPECT_THROW(solve_box_qp(BoxQP::dense({1}, {0}, {0}, {1}), 0.0), InvalidInput);
}

TEST(BoxQP, SweepCapCarriesBestIterate) {
  // strongly coupled: many sweeps needed
  const auto qp = BoxQP::shifted_rank_one(1e-3, {1, 1, 1}, {-1, 2, -3}, {-10, -10, -10},
                                          {10, 10, 10});
  QPOptions options;
  options.tol = 1e-12;
  options.max_sweeps = 2;
  try {
    solve_box_qp(qp, options);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_EQ(e.best_iterate().size(), 3u);
    EXPECT_GT(e.residual(), 1e-12);
  }
}

TEST(BoxQP, RandomInstancesMatchEnumerationOracle) {
  std::mt19937_64 rng(2024);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + static_cast<std::size_t>(t % 6);
    std::vector<double> q(n), lo(n), hi(n);
    for (std::size_t k = 0; k < n; ++k) {
      q[k] = oracle::uniform(rng, -3.0, 3.0);
      lo[k] = (t % 4 == 0) ? 0.0 : oracle::uniform(rng, -1.0, 0.0);
      hi[k] = (rng() % 5 == 0) ? kInf : lo[k] + oracle::uniform(rng, 0.1, 2.0);
    }
    BoxQP qp;
    if (t % 2 == 0) {
      std::vector<double> d(n);
      for (double& v : d) v = oracle::uniform(rng, -1.5, 1.5);
      qp = BoxQP::shifted_rank_one(oracle::uniform(rng, 0.5, 3.0), d, q, lo, hi);
    } else {
      qp = BoxQP::dense(random_spd(rng, n), q, lo, hi);
    }
    const QPSolution sol = solve_box_qp(qp, 1e-8);
    EXPECT_LE(sol.kkt_residual, 1e-8);
    EXPECT_LE(kkt_residual(qp, sol.x), 1e-8);
    const auto expect = oracle::box_qp_enumerate(qp.hessian_matrix(), q, lo, hi);
    ASSERT_EQ(expect.size(), n) << "instance " << t;
    EXPECT_LE(max_diff(sol.x, expect), 2e-3) << "instance " << t;
    for (std::size_t k = 0; k < n; ++k) {
      EXPECT_GE(sol.x[k], lo[k]);
      EXPECT_LE(sol.x[k], hi[k]);
    }
  }
}

TEST(BoxQP, LowDimensionalInstancesMatchGrid) {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 1 + static_cast<std::size_t>(t % 2);
    std::vector<double> q(n), lo(n, 0.0), hi(n);
    for (std::size_t k = 0; k < n; ++k) {
      q[k] = oracle::uniform(rng, -2.0, 2.0);
      hi[k] = oracle::uniform(rng, 0.2, 1.0);
    }
    const auto h = random_spd(rng, n);
    const auto sol = solve_box_qp(BoxQP::dense(h, q, lo, hi), 1e-10);
    const auto grid = oracle::box_qp_grid(h, q, lo, hi, 1e-3);
    EXPECT_LE(max_diff(sol.x, grid), 2e-3) << "instance " << t;
  }
}

TEST(BoxQP, ObjectiveNonIncreasingAcrossSweeps) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 6;
    std::vector<double> d(n), q(n), lo(n, 0.0), hi(n, 1.0);
    for (std::size_t k = 0; k < n; ++k) {
      d[k] = oracle::uniform(rng, -2.0, 2.0);
      q[k] = oracle::uniform(rng, -2.0, 2.0);
    }
    const auto qp = BoxQP::shifted_rank_one(0.05, d, q, lo, hi);
    double previous = qp.value(std::vector<double>(n, 0.0));
    std::vector<double> x(n, 0.0);
    for (int sweep = 0; sweep < 30; ++sweep) {
      QPOptions one;
      one.tol = 1e-300;
      one.max_sweeps = 1;
      try {
        x = solve_box_qp(qp, one, x).x;
      } catch (const ConvergenceError& e) {
        x = e.best_iterate();
      }
      const double v = qp.value(x);
      EXPECT_LE(v, previous + 1e-12);
      previous = v;
    }
  }
}

TEST(BoxQP, TighterToleranceMovesLessThanOldTolerance) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = 1 + static_cast<std::size_t>(t % 6);
    std::vector<double> q(n), lo(n, 0.0), hi(n, 2.0);
    for (double& v : q) v = oracle::uniform(rng, -3.0, 3.0);
    const auto qp = BoxQP::dense(random_spd(rng, n), q, lo, hi);
    for (double tol : {1e-4, 1e-6, 1e-8}) {
      const auto coarse = solve_box_qp(qp, tol);
      const auto fine = solve_box_qp(qp, tol / 10.0);
      EXPECT_LE(max_diff(coarse.x, fine.x), tol) << "instance " << t << " tol " << tol;
    }
  }
}

TEST(Assemble, TwoNodeExamples) {
  const DirectedGraph g(2, {{0, 1, 1.0, 10.0}});
  const AgentState a1 = AgentState::initial(g, 0, 1.0);
  const NeighborPlans n1{{1, {0.0}}};
  const BoxQP qp = assemble_subproblem(g, a1, n1, {0.0, 10.0});
  EXPECT_DOUBLE_EQ(qp.hessian(0, 0), 2.0);
  EXPECT_NEAR(qp.linear()[0], -0.9, 1e-15);
  EXPECT_EQ(qp.upper()[0], 10.0);
  const BoxQP qp10 = assemble_subproblem(g, a1, n1, {10.0, 10.0});
  EXPECT_DOUBLE_EQ(qp10.hessian(0, 0), 3.0);
  EXPECT_NEAR(qp10.linear()[0], -0.9, 1e-15);
}

TEST(Assemble, ZeroInputsGiveZeroMinimizer) {
  const DirectedGraph g = generate(GraphKind::kRing, 4, 0.0, 5.0);
  const AgentState st = AgentState::initial(g, 2, 0.0);
  NeighborPlans np;
  for (NodeId j : {1u, 3u}) np[j] = std::vector<double>(g.arc_count(), 0.0);
  const auto x = solve_box_qp(assemble_subproblem(g, st, np, {0.0, 10.0}), 1e-12).x;
  for (double v : x) EXPECT_EQ(v, 0.0);
}

TEST(Assemble, NeighborKeysMustMatch) {
  const DirectedGraph g = generate(GraphKind::kRing, 4, 1.0, 5.0);
  const AgentState st = AgentState::initial(g, 0, 0.0);
  const std::vector<double> zero(g.arc_count(), 0.0);
  EXPECT_THROW(assemble_subproblem(g, st, NeighborPlans{{1, zero}}, {}), ProtocolError);
  EXPECT_THROW(assemble_subproblem(g, st, NeighborPlans{{1, zero}, {2, zero}, {3, zero}}, {}),
               ProtocolError);
  EXPECT_NO_THROW(assemble_subproblem(g, st, NeighborPlans{{1, zero}, {3, zero}}, {}));
}

TEST(Assemble, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(31);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = oracle::random_instance(seed + 500, 3 + seed % 4);
    const DirectedGraph& g = inst.graph;
    const std::size_t m = g.arc_count();
    const NodeId i = oracle::pick(rng, g.node_count());
    AgentState st = AgentState::initial(g, i, inst.rho[i]);
    st.alpha = oracle::uniform(rng, -1.0, 1.0);
    for (std::size_t a = 0; a < m; ++a) {
      st.plan[a] = oracle::uniform(rng, 0.0, 1.0);
      st.s[a] = oracle::uniform(rng, -0.5, 0.5);
    }
    NeighborPlans np;
    std::vector<std::vector<double>> multiset;
    auto add = [&](NodeId j) {
      if (!np.contains(j)) {
        std::vector<double> p(m);
        for (double& v : p) v = oracle::uniform(rng, 0.0, 1.0);
        np[j] = p;
      }
      multiset.push_back(np[j]);
    };
    for (NodeId j : st.neighbors.outbound) add(j);
    for (NodeId j : st.neighbors.inbound) add(j);
    const SubproblemParams params{oracle::uniform(rng, 0.0, 2.0), 10.0};
    const BoxQP qp = assemble_subproblem(g, st, np, params);

    auto f = [&](const std::vector<double>& x) {
      return oracle::agent_objective(g, i, params.gamma, params.delta, st.alpha, st.local_supply,
                                     st.s, st.plan, multiset, x);
    };
    std::vector<double> x(m);
    for (double& v : x) v = oracle::uniform(rng, 0.0, 1.0);
    const auto grad = qp.gradient(x);
    const double h = 1e-5;
    for (std::size_t a = 0; a < m; ++a) {
      auto xp = x, xm = x;
      xp[a] += h;
      xm[a] -= h;
      const double fd = (f(xp) - f(xm)) / (2.0 * h);
      EXPECT_LE(std::abs(fd - grad[a]), 1e-6 * std::max(1.0, std::abs(fd)))
          << "seed " << seed << " arc " << a;
    }
    // The library's own term-by-term objective agrees with the oracle.
    EXPECT_NEAR(subproblem_objective(g, st, np, params, x), f(x), 1e-10);
  }
}
