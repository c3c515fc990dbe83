#pragma once

#include <map>
#include <vector>

#include "otadmm/graph.hpp"

namespace otadmm {

/// One agent's local copy of the plan together with its duals.
struct AgentState {
  NodeId node = 0;
  std::vector<double> plan;  // full arc-flow vector, length |A|
  double alpha = 0.0;        // dual of the local divergence constraint
  std::vector<double> s;     // aggregated consensus dual, length |A|
  NeighborSets neighbors;    // currently active neighbors
  double local_supply = 0.0; // rho_i
  bool active = true;

  /// Zero plan and duals, neighbors taken from the graph.
  static AgentState initial(const DirectedGraph& graph, NodeId node, double local_supply);

  friend bool operator==(const AgentState&, const AgentState&) = default;
};

/// Plans received from neighbors, keyed by neighbor id.
using NeighborPlans = std::map<NodeId, std::vector<double>>;

}  // namespace otadmm
