#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace otadmm {

/// Zero-based node index. File formats and reports use 1-based ids.
using NodeId = std::size_t;
/// Index into the arc list; every plan vector is laid out in this order.
using ArcId = std::size_t;

inline constexpr double kInfiniteCapacity = std::numeric_limits<double>::infinity();

struct Arc {
  NodeId from = 0;
  NodeId to = 0;
  double cost = 0.0;
  double capacity = kInfiniteCapacity;

  friend bool operator==(const Arc&, const Arc&) = default;
};

/// Distinct in- and out-neighbors of a node.
struct NeighborSets {
  std::vector<NodeId> inbound;   // N-(i): j with arc j->i
  std::vector<NodeId> outbound;  // N+(i): j with arc i->j

  /// |N+(i)| + |N-(i)|. A neighbor joined by arcs in both directions counts twice.
  std::size_t degree() const { return inbound.size() + outbound.size(); }

  friend bool operator==(const NeighborSets&, const NeighborSets&) = default;
};

/// Immutable directed graph with per-arc cost and capacity.
///
/// The constructor enforces the structural invariants (endpoints in range, no
/// self-loops, no parallel arcs, no NaN). Sign conditions on costs and
/// capacities are reported by validate() so that callers can collect every
/// problem with an input file at once.
class DirectedGraph {
 public:
  DirectedGraph() = default;
  DirectedGraph(std::size_t node_count, std::vector<Arc> arcs);

  std::size_t node_count() const { return node_count_; }
  std::size_t arc_count() const { return arcs_.size(); }
  const std::vector<Arc>& arcs() const { return arcs_; }
  const Arc& arc(ArcId a) const { return arcs_.at(a); }

  std::vector<double> costs() const;
  std::vector<double> capacities() const;

  const NeighborSets& neighbors(NodeId node) const { return neighbors_.at(node); }
  /// Arcs leaving / entering `node`, in arc-index order.
  const std::vector<ArcId>& out_arcs(NodeId node) const { return out_arcs_.at(node); }
  const std::vector<ArcId>& in_arcs(NodeId node) const { return in_arcs_.at(node); }

  friend bool operator==(const DirectedGraph& lhs, const DirectedGraph& rhs) {
    return lhs.node_count_ == rhs.node_count_ && lhs.arcs_ == rhs.arcs_;
  }

 private:
  std::size_t node_count_ = 0;
  std::vector<Arc> arcs_;
  std::vector<NeighborSets> neighbors_;
  std::vector<std::vector<ArcId>> out_arcs_;
  std::vector<std::vector<ArcId>> in_arcs_;
};

/// Source and target distributions and the net supply rho = rho0 - rhoInf.
struct MassProblem {
  std::vector<double> rho0;
  std::vector<double> rho_inf;
  std::vector<double> rho;

  /// Throws InvalidInput on negative entries, length mismatch or unequal totals.
  static MassProblem from_marginals(std::vector<double> rho0, std::vector<double> rho_inf);
  /// Splits a net-supply vector into its positive and negative parts.
  static MassProblem from_net_supply(std::vector<double> rho);

  std::size_t size() const { return rho.size(); }
};

inline constexpr double kBalanceTolerance = 1e-12;

/// Negative divergence: out-flow minus in-flow at every node.
std::vector<double> divergence(const DirectedGraph& graph, std::span<const double> plan);

/// Row `node` of the divergence operator: +1 on leaving arcs, -1 on entering arcs.
std::vector<double> incidence_row(const DirectedGraph& graph, NodeId node);

/// max_i || deg(i) * plan_i - sum_{j adjacent to i} plan_j ||_inf, with a
/// neighbor joined in both directions counted twice. This is the Laplacian
/// (L kron I) residual of the stacked per-node plans; it vanishes exactly when
/// all plans agree on a weakly connected graph.
double laplacian_kernel_gap(const DirectedGraph& graph,
                            std::span<const std::vector<double>> plans);

struct Connectivity {
  bool strong = false;
  bool weak = false;
};

Connectivity check_connectivity(const DirectedGraph& graph);

enum class GraphKind { kLine, kRing, kStar, kComplete, kBipartite };

GraphKind parse_graph_kind(const std::string& name);
std::string to_string(GraphKind kind);

/// Test topologies with uniform cost and capacity. Line, ring, star and
/// complete graphs realise every undirected edge as two opposite arcs; the
/// bipartite graph has n/2 sources and n/2 sinks with arcs source->sink only.
/// Star uses node 0 as the hub.
DirectedGraph generate(GraphKind kind, std::size_t n, double cost_value, double capacity_value);

enum class Severity { kWarning, kError };

struct Finding {
  Severity severity = Severity::kError;
  std::string code;
  std::string message;
};

/// Necessary-condition screening for feasibility. Hard errors: size mismatch,
/// supply-demand imbalance, negative costs, nonpositive capacities, weak
/// disconnection. Lack of strong connectivity is a warning.
std::vector<Finding> validate(const DirectedGraph& graph, const MassProblem& problem);

bool has_errors(const std::vector<Finding>& findings);

}  // namespace otadmm
