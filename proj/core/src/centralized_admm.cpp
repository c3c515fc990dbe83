#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "otadmm/baselines.hpp"
#include "otadmm/errors.hpp"

namespace otadmm {

namespace {

Eigen::MatrixXd divergence_matrix(const DirectedGraph& graph) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(graph.node_count()),
                                            static_cast<Eigen::Index>(graph.arc_count()));
  for (ArcId k = 0; k < graph.arc_count(); ++k) {
    const Arc& arc = graph.arc(k);
    a(static_cast<Eigen::Index>(arc.from), static_cast<Eigen::Index>(k)) = 1.0;
    a(static_cast<Eigen::Index>(arc.to), static_cast<Eigen::Index>(k)) = -1.0;
  }
  return a;
}

Eigen::VectorXd to_eigen(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace

CentralizedResult centralized_admm(const DirectedGraph& graph, const MassProblem& problem,
                                   const SolverConfig& config) {
  check_config(config);
  if (problem.rho.size() != graph.node_count()) throw DimensionError("rho length != |V|");
  for (const Finding& f : validate(graph, problem)) {
    if (f.severity == Severity::kError) throw InvalidInput(f.message);
  }
  const auto m = static_cast<Eigen::Index>(graph.arc_count());
  const Eigen::MatrixXd a = divergence_matrix(graph);
  const Eigen::VectorXd rho = to_eigen(problem.rho);
  const Eigen::VectorXd cost = to_eigen(graph.costs());
  const Eigen::VectorXd cap = to_eigen(graph.capacities());

  // M is iteration independent; factor once.
  Eigen::MatrixXd system = a.transpose() * a;
  const double gamma = total_gamma(config.gamma, graph.node_count());
  system.diagonal().array() += gamma / config.delta + 1.0;
  const Eigen::LLT<Eigen::MatrixXd> factor(system);
  if (factor.info() != Eigen::Success) throw Error("centralized ADMM: factorization failed");

  const Eigen::VectorXd fixed_rhs = a.transpose() * rho - cost / config.delta;
  Eigen::VectorXd plan = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(a.rows());
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(m);

  CentralizedResult result;
  for (std::size_t k = 0; k < config.max_iters; ++k) {
    plan = factor.solve(fixed_rhs + z - a.transpose() * alpha - beta);
    z = (plan + beta).cwiseMax(0.0).cwiseMin(cap);
    const Eigen::VectorXd violation = a * plan - rho;
    alpha += violation;
    beta += plan - z;

    TraceRow row;
    row.iter = k;
    row.error = (plan - z).norm() + violation.norm();
    row.feasibility = (a * z - rho).cwiseAbs().maxCoeff();
    const std::vector<double> zs = to_std(z);
    row.objective = objective(graph, zs, gamma);
    result.trace.rows.push_back(row);
    result.iterations = k + 1;
    if (row.error < config.epsilon) {
      result.converged = true;
      break;
    }
  }
  result.plan = to_std(z);
  return result;
}

std::vector<double> grid_search_solution(const DirectedGraph& graph, const MassProblem& problem,
                                         double gamma, double step) {
  if (!(step > 0.0)) throw InvalidInput("grid step must be positive");
  const Eigen::MatrixXd a = divergence_matrix(graph);
  const Eigen::VectorXd rho = to_eigen(problem.rho);
  const Eigen::Index m = a.cols();

  const Eigen::VectorXd particular = a.completeOrthogonalDecomposition().solve(rho);
  if ((a * particular - rho).norm() > 1e-9) throw InvalidInput("grid search: infeasible supply");
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  const Eigen::MatrixXd raw_kernel = lu.kernel();
  Eigen::MatrixXd kernel;
  if (lu.rank() < m) {
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw_kernel);
    kernel = qr.householderQ() * Eigen::MatrixXd::Identity(m, raw_kernel.cols());
  } else {
    kernel = Eigen::MatrixXd(m, 0);
  }
  if (kernel.cols() > 2) throw InvalidInput("grid search supports at most two free directions");

  double supply = 0.0;
  for (double r : problem.rho) supply += std::max(r, 0.0);
  Eigen::VectorXd upper = to_eigen(graph.capacities());
  for (Eigen::Index k = 0; k < m; ++k) upper(k) = std::min(upper(k), supply);
  const double radius = particular.norm() + upper.norm() + step;

  std::vector<double> best;
  double best_value = std::numeric_limits<double>::infinity();
  auto consider = [&](const Eigen::VectorXd& x) {
    for (Eigen::Index k = 0; k < m; ++k) {
      if (x(k) < -step || x(k) > upper(k) + step) return;
    }
    const std::vector<double> clamped = to_std(x.cwiseMax(0.0).cwiseMin(upper));
    const double value = objective(graph, clamped, gamma);
    if (value < best_value) {
      best_value = value;
      best = clamped;
    }
  };

  const auto ticks = static_cast<long>(std::ceil(radius / step));
  if (kernel.cols() == 0) {
    consider(particular);
  } else if (kernel.cols() == 1) {
    for (long t = -ticks; t <= ticks; ++t) {
      consider(particular + kernel.col(0) * (static_cast<double>(t) * step));
    }
  } else {
    for (long t0 = -ticks; t0 <= ticks; ++t0) {
      const Eigen::VectorXd base = particular + kernel.col(0) * (static_cast<double>(t0) * step);
      for (long t1 = -ticks; t1 <= ticks; ++t1) {
        consider(base + kernel.col(1) * (static_cast<double>(t1) * step));
      }
    }
  }
  if (best.empty()) throw InvalidInput("grid search: no feasible point within the box");
  return best;
}

std::vector<double> reference_solution(const DirectedGraph& graph, const MassProblem& problem,
                                       double gamma) {
  SolverConfig tight;
  tight.gamma = gamma;
  tight.epsilon = 1e-9;
  tight.max_iters = 1000000;
  const CentralizedResult result = centralized_admm(graph, problem, tight);
  if (!result.converged) {
    throw ConvergenceError("reference solution did not reach 1e-9", result.plan,
                           result.trace.rows.back().error);
  }
  if (graph.arc_count() <= 3) {
    const std::vector<double> grid =
        grid_search_solution(graph, problem, total_gamma(gamma, graph.node_count()), 1e-3);
    const double weight = total_gamma(gamma, graph.node_count());
    const double ref_value = objective(graph, result.plan, weight);
    const double grid_value = objective(graph, grid, weight);
    if (std::abs(ref_value - grid_value) > 1e-2 * (1.0 + std::abs(grid_value))) {
      throw Error("reference solution disagrees with grid search: " + std::to_string(ref_value) +
                  " vs " + std::to_string(grid_value));
    }
  }
  return result.plan;
}

}  // namespace otadmm
