#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "otadmm/agent.hpp"
#include "otadmm/config.hpp"
#include "otadmm/graph.hpp"
#include "otadmm/trace.hpp"

namespace otadmm {

struct DepartureEvent {
  std::size_t at_iteration = 0;
  NodeId node = 0;
  std::vector<double> new_rho;

  friend bool operator==(const DepartureEvent&, const DepartureEvent&) = default;
};

/// Events sorted by strictly increasing iteration.
struct EventSchedule {
  std::vector<DepartureEvent> events;

  /// Throws InvalidInput on non-increasing iterations or unbalanced new_rho.
  void check(std::size_t node_count) const;

  friend bool operator==(const EventSchedule&, const EventSchedule&) = default;
};

struct Solution {
  std::vector<double> plan;  // mean over active agents
  std::vector<std::vector<double>> per_agent_plans;
  double objective = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
  double consensus_gap = 0.0;
};

struct RunResult {
  Solution solution;
  RunTrace trace;
};

// Per-agent building blocks of one round. The engine composes these; they are
// public so each update can be checked in isolation.

/// Minimizer of the agent's primal subproblem over [0, capacity].
std::vector<double> primal_update(const DirectedGraph& graph, std::span<const double> capacity,
                                  const AgentState& agent, const NeighborPlans& neighbor_plans,
                                  const SolverConfig& config);

/// alpha + div(new_plan)_i - rho_i.
double dual_update_alpha(const DirectedGraph& graph, const AgentState& agent,
                         std::span<const double> new_plan);

/// s + 1/2 sum_j (new_plan - new_plan_j) over the agent's neighbors, a
/// neighbor joined both ways counted twice.
std::vector<double> dual_update_s(const AgentState& agent, std::span<const double> new_plan,
                                  const NeighborPlans& neighbor_new_plans);

/// sum over active agents of ||s' - s|| + ||plan' - plan|| + |alpha' - alpha|.
double residual_error(std::span<const AgentState> before, std::span<const AgentState> after);

/// Synchronous simulation of the distributed ADMM iterations. Each round has
/// three phases: every active agent solves its primal subproblem against the
/// previous round's neighbor plans, the new plans are exchanged, then every
/// active agent updates its duals from the new plans. Phase A and Phase C run
/// on up to `threads` workers; results are combined in agent order, so the
/// output does not depend on the thread count.
class DistributedEngine {
 public:
  DistributedEngine(DirectedGraph graph, MassProblem problem, SolverConfig config,
                    std::size_t threads = 1);
  ~DistributedEngine();
  DistributedEngine(DistributedEngine&&) noexcept;
  DistributedEngine& operator=(DistributedEngine&&) noexcept;

  const DirectedGraph& graph() const { return graph_; }
  const SolverConfig& config() const { return config_; }
  const std::vector<AgentState>& agents() const { return agents_; }
  std::span<const double> capacities() const { return capacity_; }
  /// Current net supply per node (changes on departure).
  const std::vector<double>& supply() const { return rho_; }
  std::size_t iteration() const { return iteration_; }
  /// Non-fatal findings from construction (e.g. not strongly connected, or
  /// gamma = 0 with an infinite capacity).
  const std::vector<Finding>& warnings() const { return warnings_; }

  /// Executes one round and returns its trace row (indexed by the round just
  /// completed, starting at 0).
  TraceRow round();

  /// Rounds until Error_k < epsilon with no events pending, or max_iters
  /// rounds in total. Each event fires right before the round whose index
  /// equals its at_iteration. Never throws on non-convergence.
  RunResult run(const EventSchedule& events = {});

  /// Freezes `node`, zeroes the capacity of its arcs, drops it from every
  /// neighbor set and installs the new supply vector.
  void apply_departure(NodeId node, std::span<const double> new_rho);

  /// Max over active pairs joined by an arc of ||plan_i - plan_j||_inf.
  double consensus_gap() const;
  /// Laplacian residual restricted to the active subgraph.
  double laplacian_gap() const;

  /// Mean of the active agents' plans.
  std::vector<double> mean_plan() const;
  /// max over active i of |div(mean plan)_i - rho_i|.
  double feasibility_residual() const;
  Solution solution(bool converged) const;

 private:
  class Workers;

  void for_each_active(const std::function<void(NodeId)>& fn);

  DirectedGraph graph_;
  SolverConfig config_;
  std::vector<double> capacity_;
  std::vector<double> rho_;
  std::vector<AgentState> agents_;
  std::size_t iteration_ = 0;
  std::vector<Finding> warnings_;
  std::unique_ptr<Workers> workers_;
};

}  // namespace otadmm
