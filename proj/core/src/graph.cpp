#include "otadmm/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <utility>

#include "otadmm/errors.hpp"

namespace otadmm {

DirectedGraph::DirectedGraph(std::size_t node_count, std::vector<Arc> arcs)
    : node_count_(node_count),
      arcs_(std::move(arcs)),
      neighbors_(node_count),
      out_arcs_(node_count),
      in_arcs_(node_count) {
  if (node_count_ == 0) throw InvalidInput("graph must have at least one node");
  std::set<std::pair<NodeId, NodeId>> seen;
  for (ArcId a = 0; a < arcs_.size(); ++a) {
    const Arc& arc = arcs_[a];
    const std::string label = "arc " + std::to_string(a + 1);
    if (arc.from >= node_count_ || arc.to >= node_count_) {
      throw InvalidInput(label + ": endpoint out of range");
    }
    if (arc.from == arc.to) throw InvalidInput(label + ": self-loop");
    if (std::isnan(arc.cost) || std::isnan(arc.capacity)) {
      throw InvalidInput(label + ": NaN cost or capacity");
    }
    if (!seen.emplace(arc.from, arc.to).second) {
      throw InvalidInput(label + ": duplicate arc " + std::to_string(arc.from + 1) + "->" +
                         std::to_string(arc.to + 1));
    }
    out_arcs_[arc.from].push_back(a);
    in_arcs_[arc.to].push_back(a);
    neighbors_[arc.from].outbound.push_back(arc.to);
    neighbors_[arc.to].inbound.push_back(arc.from);
  }
  for (NeighborSets& nb : neighbors_) {
    std::sort(nb.outbound.begin(), nb.outbound.end());
    std::sort(nb.inbound.begin(), nb.inbound.end());
  }
}

std::vector<double> DirectedGraph::costs() const {
  std::vector<double> out(arcs_.size());
  std::transform(arcs_.begin(), arcs_.end(), out.begin(), [](const Arc& a) { return a.cost; });
  return out;
}

std::vector<double> DirectedGraph::capacities() const {
  std::vector<double> out(arcs_.size());
  std::transform(arcs_.begin(), arcs_.end(), out.begin(),
                 [](const Arc& a) { return a.capacity; });
  return out;
}

MassProblem MassProblem::from_marginals(std::vector<double> rho0, std::vector<double> rho_inf) {
  if (rho0.size() != rho_inf.size()) {
    throw DimensionError("rho0 and rhoInf have different lengths");
  }
  for (std::size_t i = 0; i < rho0.size(); ++i) {
    if (!(rho0[i] >= 0.0) || !(rho_inf[i] >= 0.0)) {
      throw InvalidInput("node " + std::to_string(i + 1) + ": marginals must be nonnegative");
    }
  }
  const double total0 = std::accumulate(rho0.begin(), rho0.end(), 0.0);
  const double total_inf = std::accumulate(rho_inf.begin(), rho_inf.end(), 0.0);
  if (std::abs(total0 - total_inf) > kBalanceTolerance) {
    throw InvalidInput("supply-demand imbalance: sum(rho0) - sum(rhoInf) = " +
                       std::to_string(total0 - total_inf));
  }
  MassProblem p;
  p.rho.resize(rho0.size());
  for (std::size_t i = 0; i < rho0.size(); ++i) p.rho[i] = rho0[i] - rho_inf[i];
  p.rho0 = std::move(rho0);
  p.rho_inf = std::move(rho_inf);
  return p;
}

MassProblem MassProblem::from_net_supply(std::vector<double> rho) {
  MassProblem p;
  p.rho0.resize(rho.size());
  p.rho_inf.resize(rho.size());
  for (std::size_t i = 0; i < rho.size(); ++i) {
    if (std::isnan(rho[i])) throw InvalidInput("node " + std::to_string(i + 1) + ": NaN supply");
    p.rho0[i] = std::max(rho[i], 0.0);
    p.rho_inf[i] = std::max(-rho[i], 0.0);
  }
  const double total = std::accumulate(rho.begin(), rho.end(), 0.0);
  if (std::abs(total) > kBalanceTolerance) {
    throw InvalidInput("supply-demand imbalance: sum(rho) = " + std::to_string(total));
  }
  p.rho = std::move(rho);
  return p;
}

std::vector<double> divergence(const DirectedGraph& graph, std::span<const double> plan) {
  if (plan.size() != graph.arc_count()) {
    throw DimensionError("plan has " + std::to_string(plan.size()) + " entries, graph has " +
                         std::to_string(graph.arc_count()) + " arcs");
  }
  std::vector<double> div(graph.node_count(), 0.0);
  const auto& arcs = graph.arcs();
  for (ArcId a = 0; a < arcs.size(); ++a) {
    div[arcs[a].from] += plan[a];
    div[arcs[a].to] -= plan[a];
  }
  return div;
}

std::vector<double> incidence_row(const DirectedGraph& graph, NodeId node) {
  if (node >= graph.node_count()) {
    throw InvalidInput("node " + std::to_string(node + 1) + " does not exist");
  }
  std::vector<double> row(graph.arc_count(), 0.0);
  for (ArcId a : graph.out_arcs(node)) row[a] = 1.0;
  for (ArcId a : graph.in_arcs(node)) row[a] = -1.0;
  return row;
}

double laplacian_kernel_gap(const DirectedGraph& graph,
                            std::span<const std::vector<double>> plans) {
  if (plans.size() != graph.node_count()) {
    throw DimensionError("expected one plan per node");
  }
  for (const auto& p : plans) {
    if (p.size() != graph.arc_count()) throw DimensionError("plan length differs from |A|");
  }
  double gap = 0.0;
  std::vector<double> residual(graph.arc_count());
  for (NodeId i = 0; i < graph.node_count(); ++i) {
    const auto& nb = graph.neighbors(i);
    const double deg = static_cast<double>(nb.degree());
    for (ArcId a = 0; a < residual.size(); ++a) residual[a] = deg * plans[i][a];
    for (NodeId j : nb.outbound) {
      for (ArcId a = 0; a < residual.size(); ++a) residual[a] -= plans[j][a];
    }
    for (NodeId j : nb.inbound) {
      for (ArcId a = 0; a < residual.size(); ++a) residual[a] -= plans[j][a];
    }
    for (double r : residual) gap = std::max(gap, std::abs(r));
  }
  return gap;
}

namespace {

std::vector<bool> reachable(const DirectedGraph& graph, NodeId start, bool forward,
                            bool backward) {
  std::vector<bool> seen(graph.node_count(), false);
  std::vector<NodeId> stack{start};
  seen[start] = true;
  while (!stack.empty()) {
    const NodeId u = stack.back();
    stack.pop_back();
    auto visit = [&](NodeId v) {
      if (!seen[v]) {
        seen[v] = true;
        stack.push_back(v);
      }
    };
    if (forward) std::ranges::for_each(graph.neighbors(u).outbound, visit);
    if (backward) std::ranges::for_each(graph.neighbors(u).inbound, visit);
  }
  return seen;
}

bool all_true(const std::vector<bool>& v) {
  return std::all_of(v.begin(), v.end(), [](bool b) { return b; });
}

}  // namespace

Connectivity check_connectivity(const DirectedGraph& graph) {
  if (graph.node_count() == 0) return {};
  Connectivity c;
  c.weak = all_true(reachable(graph, 0, true, true));
  c.strong = c.weak && all_true(reachable(graph, 0, true, false)) &&
             all_true(reachable(graph, 0, false, true));
  return c;
}

GraphKind parse_graph_kind(const std::string& name) {
  if (name == "line") return GraphKind::kLine;
  if (name == "ring") return GraphKind::kRing;
  if (name == "star") return GraphKind::kStar;
  if (name == "complete") return GraphKind::kComplete;
  if (name == "bipartite") return GraphKind::kBipartite;
  throw InvalidInput("unknown graph kind '" + name + "'");
}

std::string to_string(GraphKind kind) {
  switch (kind) {
    case GraphKind::kLine: return "line";
    case GraphKind::kRing: return "ring";
    case GraphKind::kStar: return "star";
    case GraphKind::kComplete: return "complete";
    case GraphKind::kBipartite: return "bipartite";
  }
  return "unknown";
}

DirectedGraph generate(GraphKind kind, std::size_t n, double cost_value, double capacity_value) {
  if (n < 2) throw InvalidInput("generator needs n >= 2");
  std::vector<Arc> arcs;
  auto arc = [&](NodeId from, NodeId to) { arcs.push_back({from, to, cost_value, capacity_value}); };
  switch (kind) {
    case GraphKind::kLine:
      for (NodeId i = 0; i + 1 < n; ++i) arc(i, i + 1);
      for (NodeId i = 0; i + 1 < n; ++i) arc(i + 1, i);
      break;
    case GraphKind::kRing:
      if (n < 3) throw InvalidInput("ring needs n >= 3");
      for (NodeId i = 0; i < n; ++i) arc(i, (i + 1) % n);
      for (NodeId i = 0; i < n; ++i) arc((i + 1) % n, i);
      break;
    case GraphKind::kStar:
      for (NodeId i = 1; i < n; ++i) arc(0, i);
      for (NodeId i = 1; i < n; ++i) arc(i, 0);
      break;
    case GraphKind::kComplete:
      for (NodeId i = 0; i < n; ++i) {
        for (NodeId j = 0; j < n; ++j) {
          if (i != j) arc(i, j);
        }
      }
      break;
    case GraphKind::kBipartite:
      if (n % 2 != 0) throw InvalidInput("bipartite generator needs an even n");
      for (NodeId i = 0; i < n / 2; ++i) {
        for (NodeId j = n / 2; j < n; ++j) arc(i, j);
      }
      break;
  }
  return DirectedGraph(n, std::move(arcs));
}

std::vector<Finding> validate(const DirectedGraph& graph, const MassProblem& problem) {
  std::vector<Finding> out;
  auto error = [&](std::string code, std::string msg) {
    out.push_back({Severity::kError, std::move(code), std::move(msg)});
  };
  if (problem.rho.size() != graph.node_count()) {
    error("size-mismatch", "supply vector has " + std::to_string(problem.rho.size()) +
                               " entries for " + std::to_string(graph.node_count()) + " nodes");
  } else {
    const double total = std::accumulate(problem.rho.begin(), problem.rho.end(), 0.0);
    if (std::abs(total) > kBalanceTolerance) {
      error("imbalance", "supply-demand imbalance: sum(rho) = " + std::to_string(total));
    }
  }
  for (ArcId a = 0; a < graph.arc_count(); ++a) {
    const Arc& arc = graph.arc(a);
    if (!(arc.cost >= 0.0)) {
      error("negative-cost", "arc " + std::to_string(a + 1) + " has negative cost");
    }
    if (!(arc.capacity > 0.0)) {
      error("nonpositive-capacity", "arc " + std::to_string(a + 1) + " has nonpositive capacity");
    }
  }
  const Connectivity conn = check_connectivity(graph);
  if (!conn.weak) {
    error("weakly-disconnected", "graph is not weakly connected; consensus is unattainable");
  } else if (!conn.strong) {
    out.push_back({Severity::kWarning, "not-strongly-connected",
                   "graph is not strongly connected (warning)"});
  }
  return out;
}

bool has_errors(const std::vector<Finding>& findings) {
  return std::any_of(findings.begin(), findings.end(),
                     [](const Finding& f) { return f.severity == Severity::kError; });
}

}  // namespace otadmm
