#include "otadmm/local_qp.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include <Eigen/Eigenvalues>

#include "otadmm/errors.hpp"

namespace otadmm {

namespace {

double clamp_to(double v, double lo, double hi) { return std::max(lo, std::min(hi, v)); }

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

}  // namespace

AgentState AgentState::initial(const DirectedGraph& graph, NodeId node, double local_supply) {
  AgentState st;
  st.node = node;
  st.plan.assign(graph.arc_count(), 0.0);
  st.s.assign(graph.arc_count(), 0.0);
  st.neighbors = graph.neighbors(node);
  st.local_supply = local_supply;
  return st;
}

BoxQP BoxQP::shifted_rank_one(double shift, std::vector<double> d, std::vector<double> linear,
                              std::vector<double> lower, std::vector<double> upper) {
  BoxQP qp;
  qp.shift_ = shift;
  qp.rank_one_ = std::move(d);
  qp.linear_ = std::move(linear);
  qp.lower_ = std::move(lower);
  qp.upper_ = std::move(upper);
  if (qp.rank_one_.empty()) qp.rank_one_.assign(qp.linear_.size(), 0.0);
  qp.check_invariants();
  return qp;
}

BoxQP BoxQP::dense(std::vector<double> hessian, std::vector<double> linear,
                   std::vector<double> lower, std::vector<double> upper) {
  BoxQP qp;
  qp.dense_ = std::move(hessian);
  qp.linear_ = std::move(linear);
  qp.lower_ = std::move(lower);
  qp.upper_ = std::move(upper);
  qp.check_invariants();
  return qp;
}

void BoxQP::check_invariants() const {
  const std::size_t n = linear_.size();
  if (n == 0) throw DimensionError("box QP must have positive dimension");
  if (lower_.size() != n || upper_.size() != n) throw DimensionError("box bounds length != dim");
  for (std::size_t k = 0; k < n; ++k) {
    if (!(lower_[k] <= upper_[k])) {
      throw InvalidInput("box QP: lower > upper at coordinate " + std::to_string(k));
    }
  }
  if (is_structured()) {
    if (rank_one_.size() != n) throw DimensionError("rank-one vector length != dim");
    if (!(shift_ > 0.0)) throw InvalidInput("box QP: shift must be positive");
    return;
  }
  if (dense_.size() != n * n) throw DimensionError("hessian is not dim x dim");
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < r; ++c) {
      if (dense_[r * n + c] != dense_[c * n + r]) throw InvalidInput("hessian is not symmetric");
    }
  }
  // Cholesky attempt to confirm positive definiteness.
  std::vector<double> l(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = dense_[j * n + j];
    for (std::size_t k = 0; k < j; ++k) diag -= l[j * n + k] * l[j * n + k];
    if (!(diag > 0.0)) throw InvalidInput("hessian is not positive definite");
    l[j * n + j] = std::sqrt(diag);
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = dense_[i * n + j];
      for (std::size_t k = 0; k < j; ++k) v -= l[i * n + k] * l[j * n + k];
      l[i * n + j] = v / l[j * n + j];
    }
  }
}

double BoxQP::hessian(std::size_t row, std::size_t col) const {
  if (!is_structured()) return dense_.at(row * dim() + col);
  return (row == col ? shift_ : 0.0) + rank_one_.at(row) * rank_one_.at(col);
}

std::vector<double> BoxQP::hessian_matrix() const {
  const std::size_t n = dim();
  std::vector<double> q(n * n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) q[r * n + c] = hessian(r, c);
  }
  return q;
}

std::vector<double> BoxQP::gradient(std::span<const double> x) const {
  const std::size_t n = dim();
  if (x.size() != n) throw DimensionError("point length != dim");
  std::vector<double> g(n);
  if (is_structured()) {
    const double t = dot(rank_one_, x);
    for (std::size_t k = 0; k < n; ++k) g[k] = shift_ * x[k] + rank_one_[k] * t + linear_[k];
  } else {
    for (std::size_t r = 0; r < n; ++r) {
      g[r] = linear_[r] + dot(std::span(dense_).subspan(r * n, n), x);
    }
  }
  return g;
}

double BoxQP::value(std::span<const double> x) const {
  const std::vector<double> g = gradient(x);
  // 1/2 x'Qx + q'x = 1/2 x'(Qx + q) + 1/2 q'x
  return 0.5 * dot(x, g) + 0.5 * dot(linear_, x);
}

double kkt_residual(const BoxQP& qp, std::span<const double> x) {
  const std::vector<double> g = qp.gradient(x);
  double r = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double target = clamp_to(x[k] - g[k], qp.lower()[k], qp.upper()[k]);
    r = std::max(r, std::abs(x[k] - target));
  }
  return r;
}

namespace {

// ||x - x*||_2 <= (1 + L)/mu ||r(x)||_2 for the natural residual r, so a
// residual below the returned value keeps x within tol/2 of the minimizer.
double stopping_threshold(const BoxQP& qp, double tol) {
  const std::size_t n = qp.dim();
  double mu = 0.0, big = 0.0;
  if (qp.is_structured()) {
    const auto d = qp.rank_one();
    double dd = 0.0;
    for (double v : d) dd += v * v;
    mu = qp.shift();
    big = qp.shift() + dd;
  } else {
    const std::vector<double> h = qp.hessian_matrix();
    Eigen::MatrixXd m(n, n);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) m(r, c) = h[r * n + c];
    }
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues();
    mu = ev.minCoeff();
    big = ev.maxCoeff();
  }
  const double factor = mu / (2.0 * (1.0 + big) * std::sqrt(static_cast<double>(n)));
  return tol * std::min(1.0, factor);
}

}  // namespace

QPSolution solve_box_qp(const BoxQP& qp, const QPOptions& options, std::span<const double> start) {
  if (!(options.tol > 0.0)) throw InvalidInput("QP tolerance must be positive");
  const std::size_t n = qp.dim();
  const auto lower = qp.lower();
  const auto upper = qp.upper();
  const auto q = qp.linear();

  QPSolution sol;
  sol.x.assign(n, 0.0);
  if (!start.empty()) {
    if (start.size() != n) throw DimensionError("start point length != dim");
    std::copy(start.begin(), start.end(), sol.x.begin());
  }
  for (std::size_t k = 0; k < n; ++k) sol.x[k] = clamp_to(sol.x[k], lower[k], upper[k]);

  std::vector<double>& x = sol.x;
  const double stop = stopping_threshold(qp, options.tol);
  sol.kkt_residual = kkt_residual(qp, x);
  if (sol.kkt_residual <= stop) return sol;

  if (qp.is_structured()) {
    const double shift = qp.shift();
    const auto d = qp.rank_one();
    while (sol.iterations < options.max_sweeps) {
      double t = dot(d, x);
      for (std::size_t k = 0; k < n; ++k) {
        const double g = shift * x[k] + d[k] * t + q[k];
        const double next = clamp_to(x[k] - g / (shift + d[k] * d[k]), lower[k], upper[k]);
        t += d[k] * (next - x[k]);
        x[k] = next;
      }
      ++sol.iterations;
      sol.kkt_residual = kkt_residual(qp, x);
      if (sol.kkt_residual <= stop) return sol;
    }
  } else {
    const std::vector<double> h = qp.hessian_matrix();
    while (sol.iterations < options.max_sweeps) {
      for (std::size_t k = 0; k < n; ++k) {
        const double g = q[k] + dot(std::span(h).subspan(k * n, n), x);
        x[k] = clamp_to(x[k] - g / h[k * n + k], lower[k], upper[k]);
      }
      ++sol.iterations;
      sol.kkt_residual = kkt_residual(qp, x);
      if (sol.kkt_residual <= stop) return sol;
    }
  }
  if (sol.kkt_residual <= options.tol) return sol;
  throw ConvergenceError("box QP: KKT residual " + std::to_string(sol.kkt_residual) +
                             " above tolerance after " + std::to_string(sol.iterations) +
                             " sweeps",
                         sol.x, sol.kkt_residual);
}

QPSolution solve_box_qp(const BoxQP& qp, double tol) {
  QPOptions options;
  options.tol = tol;
  return solve_box_qp(qp, options);
}

namespace {

template <typename PlanOf>
BoxQP assemble_impl(const DirectedGraph& graph, std::span<const double> capacity,
                    const AgentState& state, PlanOf&& plan_of, const SubproblemParams& params) {
  const std::size_t m = graph.arc_count();
  if (capacity.size() != m) throw DimensionError("capacity length != |A|");
  if (state.plan.size() != m || state.s.size() != m) {
    throw DimensionError("agent state vectors must have length |A|");
  }
  if (!(params.delta > 0.0)) throw InvalidInput("delta must be positive");
  const NodeId i = state.node;
  const double deg = static_cast<double>(state.neighbors.degree());

  std::vector<double> d(m, 0.0);
  std::vector<double> q(m, 0.0);
  for (ArcId a : graph.out_arcs(i)) {
    d[a] = 1.0;
    q[a] += graph.arc(a).cost / params.delta;
  }
  for (ArcId a : graph.in_arcs(i)) d[a] = -1.0;

  const double dual_shift = state.alpha - state.local_supply;
  for (std::size_t a = 0; a < m; ++a) {
    q[a] += dual_shift * d[a] + state.s[a] - 0.5 * deg * state.plan[a];
  }
  auto subtract_half = [&](NodeId j) {
    const std::vector<double>& pj = plan_of(j);
    if (pj.size() != m) throw DimensionError("neighbor plan length != |A|");
    for (std::size_t a = 0; a < m; ++a) q[a] -= 0.5 * pj[a];
  };
  for (NodeId j : state.neighbors.outbound) subtract_half(j);
  for (NodeId j : state.neighbors.inbound) subtract_half(j);

  const double shift = params.gamma / params.delta + deg;
  if (!(shift > 0.0)) {
    throw InvalidInput("agent " + std::to_string(i + 1) +
                       " has no active neighbors and gamma = 0; subproblem is not strictly convex");
  }
  std::vector<double> lower(m, 0.0);
  std::vector<double> upper(capacity.begin(), capacity.end());
  for (std::size_t a = 0; a < m; ++a) upper[a] = std::max(upper[a], 0.0);
  return BoxQP::shifted_rank_one(shift, std::move(d), std::move(q), std::move(lower),
                                 std::move(upper));
}

void check_neighbor_keys(const AgentState& state, const NeighborPlans& neighbor_plans) {
  std::set<NodeId> expected(state.neighbors.outbound.begin(), state.neighbors.outbound.end());
  expected.insert(state.neighbors.inbound.begin(), state.neighbors.inbound.end());
  for (NodeId j : expected) {
    if (!neighbor_plans.contains(j)) {
      throw ProtocolError("agent " + std::to_string(state.node + 1) + ": missing plan from neighbor " +
                          std::to_string(j + 1));
    }
  }
  for (const auto& [j, plan] : neighbor_plans) {
    if (!expected.contains(j)) {
      throw ProtocolError("agent " + std::to_string(state.node + 1) +
                          ": unexpected plan from non-neighbor " + std::to_string(j + 1));
    }
  }
}

}  // namespace

BoxQP assemble_subproblem(const DirectedGraph& graph, std::span<const double> capacity,
                          const AgentState& state, const NeighborPlans& neighbor_plans,
                          const SubproblemParams& params) {
  check_neighbor_keys(state, neighbor_plans);
  return assemble_impl(graph, capacity, state,
                       [&](NodeId j) -> const std::vector<double>& { return neighbor_plans.at(j); },
                       params);
}

BoxQP assemble_subproblem(const DirectedGraph& graph, const AgentState& state,
                          const NeighborPlans& neighbor_plans, const SubproblemParams& params) {
  const std::vector<double> capacity = graph.capacities();
  return assemble_subproblem(graph, capacity, state, neighbor_plans, params);
}

double subproblem_objective(const DirectedGraph& graph, const AgentState& state,
                            const NeighborPlans& neighbor_plans, const SubproblemParams& params,
                            std::span<const double> x) {
  check_neighbor_keys(state, neighbor_plans);
  const std::size_t m = graph.arc_count();
  if (x.size() != m) throw DimensionError("point length != |A|");
  const NodeId i = state.node;

  double local_cost = 0.0;
  for (ArcId a : graph.out_arcs(i)) local_cost += graph.arc(a).cost * x[a];
  double norm2 = 0.0;
  for (double v : x) norm2 += v * v;
  const double div_i = divergence(graph, x)[i];

  double value = local_cost / params.delta + 0.5 * params.gamma / params.delta * norm2 +
                 state.alpha * div_i + 0.5 * (div_i - state.local_supply) * (div_i - state.local_supply) +
                 dot(state.s, x);
  auto penalty = [&](NodeId j) {
    const std::vector<double>& pj = neighbor_plans.at(j);
    double acc = 0.0;
    for (std::size_t a = 0; a < m; ++a) {
      const double diff = x[a] - 0.5 * (state.plan[a] + pj[a]);
      acc += diff * diff;
    }
    return 0.5 * acc;
  };
  for (NodeId j : state.neighbors.outbound) value += penalty(j);
  for (NodeId j : state.neighbors.inbound) value += penalty(j);
  return value;
}

namespace detail {

BoxQP assemble_subproblem(const DirectedGraph& graph, std::span<const double> capacity,
                          const AgentState& state, std::span<const std::vector<double>> plans,
                          const SubproblemParams& params) {
  return assemble_impl(
      graph, capacity, state,
      [&](NodeId j) -> const std::vector<double>& { return plans[j]; }, params);
}

}  // namespace detail

}  // namespace otadmm
