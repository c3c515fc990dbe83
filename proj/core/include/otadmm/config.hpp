#pragma once

#include <cstddef>

namespace otadmm {

/// Parameters shared by the distributed and centralized ADMM solvers.
///
/// `gamma` is the per-agent regularization weight, i.e. the user-facing
/// regularization already divided by the number of nodes. Each of the |V|
/// agents carries gamma/2 ||plan||^2, so at consensus the problem being solved
/// is  c'plan + (|V| gamma)/2 ||plan||^2.  Both ADMM solvers follow this
/// convention; objective() takes the total weight.
struct SolverConfig {
  double gamma = 0.0;
  double delta = 10.0;
  double epsilon = 1e-4;
  std::size_t max_iters = 100000;
  double qp_tol = 1e-8;
};

inline double gamma_per_agent(double total_gamma, std::size_t node_count) {
  return total_gamma / static_cast<double>(node_count);
}

inline double total_gamma(double per_agent_gamma, std::size_t node_count) {
  return per_agent_gamma * static_cast<double>(node_count);
}

/// Throws InvalidInput when delta, epsilon or qp_tol are not positive,
/// gamma is negative, or max_iters is zero.
void check_config(const SolverConfig& config);

}  // namespace otadmm
