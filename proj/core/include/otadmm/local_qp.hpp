#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "otadmm/agent.hpp"
#include "otadmm/graph.hpp"

namespace otadmm {

/// Strictly convex box-constrained QP
///
///     minimize  1/2 x'Qx + q'x   subject to  lower <= x <= upper.
///
/// The Hessian is Q = shift * I + d d' + dense, where either part may be
/// absent (dense empty, or d empty). Agent subproblems only ever use the
/// shifted rank-one part, which lets the solver run a coordinate sweep in
/// O(dim); the dense part exists for general instances and tests.
class BoxQP {
 public:
  BoxQP() = default;

  /// Q = shift * I + d d'.
  static BoxQP shifted_rank_one(double shift, std::vector<double> d, std::vector<double> linear,
                                std::vector<double> lower, std::vector<double> upper);
  /// Q given as a dense row-major dim x dim matrix.
  static BoxQP dense(std::vector<double> hessian, std::vector<double> linear,
                     std::vector<double> lower, std::vector<double> upper);

  std::size_t dim() const { return linear_.size(); }
  bool is_structured() const { return dense_.empty(); }

  double shift() const { return shift_; }
  std::span<const double> rank_one() const { return rank_one_; }
  std::span<const double> linear() const { return linear_; }
  std::span<const double> lower() const { return lower_; }
  std::span<const double> upper() const { return upper_; }

  double hessian(std::size_t row, std::size_t col) const;
  /// Materialized Q, row-major.
  std::vector<double> hessian_matrix() const;
  /// Qx + q.
  std::vector<double> gradient(std::span<const double> x) const;
  /// 1/2 x'Qx + q'x.
  double value(std::span<const double> x) const;

 private:
  void check_invariants() const;

  double shift_ = 0.0;
  std::vector<double> rank_one_;
  std::vector<double> dense_;
  std::vector<double> linear_;
  std::vector<double> lower_;
  std::vector<double> upper_;
};

struct QPSolution {
  std::vector<double> x;
  double kkt_residual = 0.0;
  std::size_t iterations = 0;  // coordinate sweeps
};

struct QPOptions {
  double tol = 1e-8;
  std::size_t max_sweeps = 100000;
};

/// ||x - clamp(x - (Qx + q), lower, upper)||_inf. Zero exactly at the minimizer.
double kkt_residual(const BoxQP& qp, std::span<const double> x);

/// Cyclic coordinate descent with exact one-dimensional minimization and
/// clamping, swept in index order until the KKT residual is small enough
/// that the iterate is within tol/2 of the minimizer (never looser than `tol`).
/// Starts from `start` (projected onto the box) or from the box projection of
/// zero. Throws ConvergenceError carrying the last iterate when the sweep cap
/// is hit with the residual still above `tol`.
QPSolution solve_box_qp(const BoxQP& qp, const QPOptions& options,
                        std::span<const double> start = {});
QPSolution solve_box_qp(const BoxQP& qp, double tol);

struct SubproblemParams {
  double gamma = 0.0;
  double delta = 10.0;
};

/// Builds agent i's primal subproblem:
///
///   Q = (gamma/delta + deg(i)) I + d_i d_i'
///   q = c^(i)/delta + (alpha_i - rho_i) d_i + s_i - sum_j (plan_i + plan_j)/2
///
/// where d_i is the incidence row of i, c^(i) keeps the cost of arcs leaving
/// i, and j runs over the active neighbors (a neighbor joined both ways is
/// counted twice). The box is [0, capacity]. `neighbor_plans` must hold
/// exactly the neighbors listed in `state.neighbors`.
BoxQP assemble_subproblem(const DirectedGraph& graph, std::span<const double> capacity,
                          const AgentState& state, const NeighborPlans& neighbor_plans,
                          const SubproblemParams& params);
BoxQP assemble_subproblem(const DirectedGraph& graph, const AgentState& state,
                          const NeighborPlans& neighbor_plans, const SubproblemParams& params);

/// The subproblem objective written term by term (not through Q and q),
/// constants included. Used to cross-check the assembly.
double subproblem_objective(const DirectedGraph& graph, const AgentState& state,
                            const NeighborPlans& neighbor_plans, const SubproblemParams& params,
                            std::span<const double> x);

namespace detail {

/// Assembly against a dense per-node plan table; `plans[j]` is read for every
/// neighbor j of `state`. Used by the engine to avoid building maps.
BoxQP assemble_subproblem(const DirectedGraph& graph, std::span<const double> capacity,
                          const AgentState& state, std::span<const std::vector<double>> plans,
                          const SubproblemParams& params);

}  // namespace detail

}  // namespace otadmm
