#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "otadmm/config.hpp"
#include "otadmm/graph.hpp"
#include "otadmm/trace.hpp"

namespace otadmm {

/// sum_a c_a plan_a + gamma/2 ||plan||^2, with `gamma` the total weight
/// (|V| times the per-agent SolverConfig::gamma).
double objective(const DirectedGraph& graph, std::span<const double> plan, double gamma);

/// Number of entries with magnitude strictly above `threshold`.
std::size_t sparsity(std::span<const double> values, double threshold);

// ---------------------------------------------------------------------------
// Centralized ADMM

struct CentralizedResult {
  std::vector<double> plan;  // the box-feasible iterate z
  RunTrace trace;
  bool converged = false;
  std::size_t iterations = 0;
};

/// Single-node ADMM on the global augmented Lagrangian with splitting
/// plan = z, z in [0, capacity]:
///
///   plan  <- M^{-1} (A'rho + z - c/delta - A'alpha - beta),
///            M = (gamma/delta + 1) I + A'A
///   z     <- clamp(plan + beta, 0, capacity)
///   alpha <- alpha + A plan - rho
///   beta  <- beta + plan - z
///
/// with scaled duals and gamma = |V| * config.gamma, so that it solves the same
/// problem as the distributed engine. Stops once
/// ||plan - z|| + ||A plan - rho|| < epsilon.
CentralizedResult centralized_admm(const DirectedGraph& graph, const MassProblem& problem,
                                   const SolverConfig& config);

/// Tight-tolerance centralized solve (epsilon = 1e-9, up to 10^6 iterations).
/// `gamma` is per agent, as in SolverConfig.
/// For graphs with at most three arcs the optimum is cross-checked against a
/// grid search over the feasible set; a disagreement throws Error. Throws
/// ConvergenceError if the tight solve does not converge.
std::vector<double> reference_solution(const DirectedGraph& graph, const MassProblem& problem,
                                       double gamma);

/// Grid search for min objective over {plan in [0, cap] : div(plan) = rho},
/// parametrised over the null space of the divergence operator. Supports at
/// most two free directions. `gamma` is the total weight, as in objective().
std::vector<double> grid_search_solution(const DirectedGraph& graph, const MassProblem& problem,
                                         double gamma, double step);

// ---------------------------------------------------------------------------
// Sinkhorn

/// Row-major n x m matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct Coupling {
  Matrix matrix;
  std::vector<double> row_marginal;
  std::vector<double> col_marginal;
  double marginal_error = 0.0;  // ||rows - a||_1 + ||cols - b||_1
  std::size_t iterations = 0;
  bool converged = false;
  bool log_domain = false;
  std::vector<double> error_history;  // marginal_error after each iteration
};

struct SinkhornOptions {
  double tol = 1e-9;
  std::size_t max_iters = 100000;
  /// Switch to log-domain updates when gamma < log_domain_ratio * max(C).
  double log_domain_ratio = 0.05;
};

/// Entropic OT by alternating scalings u <- a / (K v), v <- b / (K'u) with
/// K = exp(-C / gamma). Returns diag(u) K diag(v).
Coupling sinkhorn(const Matrix& cost, std::span<const double> a, std::span<const double> b,
                  double gamma, const SinkhornOptions& options = {});

}  // namespace otadmm
