// ot_admm: solvers and experiment drivers for quadratically regularized OT
// on directed graphs.

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "otadmm/baselines.hpp"
#include "otadmm/distributed.hpp"
#include "otadmm/errors.hpp"
#include "otadmm/experiments.hpp"
#include "otadmm/io.hpp"

namespace fs = std::filesystem;
using namespace otadmm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitNotConverged = 2;

// Worker count: --threads if given, else 1; never above OT_ADMM_THREADS.
std::size_t worker_count(std::optional<std::size_t> requested) {
  std::size_t n = requested.value_or(1);
  if (const char* env = std::getenv("OT_ADMM_THREADS")) {
    std::size_t cap = 0;
    const char* end = env + std::char_traits<char>::length(env);
    auto [ptr, ec] = std::from_chars(env, end, cap);
    if (ec == std::errc() && ptr == end && cap > 0) n = std::min(n, cap);
  }
  return std::max<std::size_t>(n, 1);
}

fs::path default_scenario() {
  const fs::path source = fs::path(OTADMM_SOURCE_DATA_DIR) / "robustness_6node.json";
  if (fs::exists(source)) return source;
  return fs::path(OTADMM_INSTALL_DATA_DIR) / "robustness_6node.json";
}

struct SolveFlags {
  std::string problem;
  std::optional<double> gamma;
  std::optional<double> gamma_total;
  std::optional<double> delta;
  std::optional<double> eps;
  std::optional<std::size_t> max_iters;
  std::string trace;
  std::string plan;
  std::optional<std::size_t> threads;
};

void add_solve_flags(CLI::App* cmd, SolveFlags& f, bool with_threads) {
  cmd->add_option("--problem", f.problem, "problem file (JSON)")->required();
  auto* g = cmd->add_option("--gamma", f.gamma, "per-agent regularization");
  auto* gt = cmd->add_option("--gamma-total", f.gamma_total,
                             "regularization before division by |V|");
  g->excludes(gt);
  cmd->add_option("--delta", f.delta, "augmented Lagrangian penalty");
  cmd->add_option("--eps", f.eps, "stopping tolerance on Error_k");
  cmd->add_option("--max-iters", f.max_iters, "iteration budget");
  cmd->add_option("--trace", f.trace, "write the per-iteration trace CSV here");
  cmd->add_option("--plan", f.plan, "write the final plan JSON here");
  if (with_threads) cmd->add_option("--threads", f.threads, "worker threads");
}

ProblemFile load(const SolveFlags& f) {
  ProblemFile file = parse_problem(f.problem);
  if (f.gamma) file.config.gamma = *f.gamma;
  if (f.gamma_total) file.config.gamma = gamma_per_agent(*f.gamma_total, file.graph.node_count());
  if (f.delta) file.config.delta = *f.delta;
  if (f.eps) file.config.epsilon = *f.eps;
  if (f.max_iters) file.config.max_iters = *f.max_iters;
  check_config(file.config);
  return file;
}

PlanMetadata metadata(const std::string& solver, const SolverConfig& config, bool converged,
                      std::size_t iterations, double objective_value, double gap) {
  PlanMetadata m;
  m.solver = solver;
  m.gamma = config.gamma;
  m.delta = config.delta;
  m.epsilon = config.epsilon;
  m.converged = converged;
  m.iterations = iterations;
  m.objective = objective_value;
  m.consensus_gap = gap;
  return m;
}

int cmd_solve(const SolveFlags& f) {
  const ProblemFile file = load(f);
  DistributedEngine engine(file.graph, file.problem, file.config, worker_count(f.threads));
  for (const Finding& w : engine.warnings()) std::cerr << "warning: " << w.message << "\n";
  const RunResult result = engine.run(file.events);
  const Solution& s = result.solution;
  if (!f.trace.empty()) write_trace(result.trace, f.trace);
  if (!f.plan.empty()) {
    write_plan(file.graph, s.plan,
               metadata("distributed", file.config, s.converged, s.iterations, s.objective,
                        s.consensus_gap),
               f.plan);
  }
  std::cout << (s.converged ? "converged" : "not converged") << " after " << s.iterations
            << " iterations, objective " << format_double(s.objective) << ", consensus gap "
            << format_double(s.consensus_gap) << "\n";
  return s.converged ? kExitOk : kExitNotConverged;
}

int cmd_central(const SolveFlags& f) {
  const ProblemFile file = load(f);
  if (!file.events.events.empty()) {
    std::cerr << "warning: the centralized solver ignores departure events\n";
  }
  const CentralizedResult r = centralized_admm(file.graph, file.problem, file.config);
  const double value =
      objective(file.graph, r.plan, total_gamma(file.config.gamma, file.graph.node_count()));
  if (!f.trace.empty()) write_trace(r.trace, f.trace);
  if (!f.plan.empty()) {
    write_plan(file.graph, r.plan,
               metadata("centralized", file.config, r.converged, r.iterations, value, 0.0), f.plan);
  }
  std::cout << (r.converged ? "converged" : "not converged") << " after " << r.iterations
            << " iterations, objective " << format_double(value) << "\n";
  return r.converged ? kExitOk : kExitNotConverged;
}

struct SinkhornFlags {
  std::string rows;
  std::string cols;
  std::string cost;
  double gamma = 1.0;
  double tol = 1e-9;
  std::size_t max_iters = 100000;
  std::string out;
  std::string trace;
};

int cmd_sinkhorn(const SinkhornFlags& f) {
  const std::vector<double> a = read_vector(f.rows);
  const std::vector<double> b = read_vector(f.cols);
  const Matrix c = read_matrix(f.cost);
  SinkhornOptions options;
  options.tol = f.tol;
  options.max_iters = f.max_iters;
  const Coupling p = sinkhorn(c, a, b, f.gamma, options);
  if (!f.out.empty()) {
    write_matrix(p.matrix, f.out);
  } else {
    std::cout << format_matrix(p.matrix);
  }
  if (!f.trace.empty()) {
    RunTrace trace;
    for (std::size_t k = 0; k < p.error_history.size(); ++k) {
      TraceRow row;
      row.iter = k;
      row.error = p.error_history[k];
      row.feasibility = p.error_history[k];
      trace.rows.push_back(row);
    }
    write_trace(trace, f.trace);
  }
  std::cerr << (p.converged ? "converged" : "not converged") << " after " << p.iterations
            << " iterations, marginal error " << format_double(p.marginal_error)
            << (p.log_domain ? " (log domain)" : "") << "\n";
  return p.converged ? kExitOk : kExitNotConverged;
}

struct GenFlags {
  std::string kind = "ring";
  std::size_t nodes = 10;
  double cost = 1.0;
  std::string capacity = "inf";
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_gen(const GenFlags& f) {
  const GraphKind kind = parse_graph_kind(f.kind);
  double capacity = kInfiniteCapacity;
  if (f.capacity != "inf") capacity = std::stod(f.capacity);
  ProblemFile file;
  file.graph = generate(kind, f.nodes, f.cost, capacity);
  std::vector<double> rho0(f.nodes, 0.0);
  std::vector<double> rho_inf(f.nodes, 0.0);
  if (kind == GraphKind::kBipartite) {
    const std::size_t h = f.nodes / 2;
    auto [a, b] = random_marginals(h, f.seed);
    std::copy(a.begin(), a.end(), rho0.begin());
    std::copy(b.begin(), b.end(), rho_inf.begin() + static_cast<std::ptrdiff_t>(h));
  } else {
    std::tie(rho0, rho_inf) = random_marginals(f.nodes, f.seed);
  }
  file.problem = MassProblem::from_marginals(std::move(rho0), std::move(rho_inf));
  file.has_marginals = true;
  file.description = f.kind + " graph, " + std::to_string(f.nodes) + " nodes, seed " +
                     std::to_string(f.seed);
  if (f.out.empty()) {
    std::cout << format_problem(file);
  } else {
    write_problem(file, f.out);
  }
  return kExitOk;
}

void print_graphs(const GraphsReport& r) {
  std::cout << "graph     gamma  iterations  converged  messages/agent\n";
  for (const GraphsCell& c : r.cells) {
    std::cout << to_string(c.kind) << std::string(10 - to_string(c.kind).size(), ' ')
              << format_double(c.gamma) << std::string(7 - format_double(c.gamma).size(), ' ')
              << c.iterations << std::string(12 - std::to_string(c.iterations).size(), ' ')
              << (c.converged ? "yes" : "no ") << "        " << c.messages_per_agent << "\n";
  }
}

void print_compare(const CompareReport& r) {
  std::cout << "method       gamma  iterations  sparsity  transport_cost\n";
  for (const CompareEntry& e : r.entries) {
    std::cout << e.method << std::string(13 - e.method.size(), ' ') << format_double(e.gamma)
              << std::string(7 - std::min<std::size_t>(6, format_double(e.gamma).size()), ' ')
              << e.iterations << std::string(12 - std::to_string(e.iterations).size(), ' ')
              << e.sparsity << std::string(10 - std::to_string(e.sparsity).size(), ' ')
              << format_double(e.transport_cost) << "\n";
  }
}

void print_robust(const RobustnessReport& r) {
  for (const RobustnessRun& run : r.runs) {
    std::cout << "gamma " << format_double(run.gamma) << ": baseline "
              << (run.baseline_converged ? "converged" : "not converged") << " in "
              << run.baseline_iterations << " (oracle delta "
              << format_double(run.baseline_oracle_delta) << "); after departure "
              << (run.diverged ? "diverged" : "converged") << " at iteration " << run.iterations;
    if (run.oracle_available) std::cout << " (oracle delta " << format_double(run.post_oracle_delta) << ")";
    std::cout << "; support";
    for (const auto& [from, to] : run.support) std::cout << " " << from + 1 << "->" << to + 1;
    std::cout << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed ADMM for quadratically regularized optimal transport on graphs"};
  app.require_subcommand(1);

  GenFlags gen;
  auto* gen_cmd = app.add_subcommand("gen", "generate a test problem");
  gen_cmd->add_option("--kind", gen.kind, "line, ring, star, complete or bipartite");
  gen_cmd->add_option("--nodes", gen.nodes, "number of nodes");
  gen_cmd->add_option("--cost", gen.cost, "uniform arc cost");
  gen_cmd->add_option("--capacity", gen.capacity, "uniform arc capacity or 'inf'");
  gen_cmd->add_option("--seed", gen.seed, "seed for the random marginals");
  gen_cmd->add_option("--out", gen.out, "output path (stdout if absent)");

  SolveFlags solve;
  auto* solve_cmd = app.add_subcommand("solve", "distributed ADMM");
  add_solve_flags(solve_cmd, solve, true);

  SolveFlags central;
  auto* central_cmd = app.add_subcommand("central", "centralized ADMM");
  add_solve_flags(central_cmd, central, false);

  SinkhornFlags sk;
  auto* sk_cmd = app.add_subcommand("sinkhorn", "entropic OT by Sinkhorn scaling");
  sk_cmd->add_option("--rows", sk.rows, "row marginal file")->required();
  sk_cmd->add_option("--cols", sk.cols, "column marginal file")->required();
  sk_cmd->add_option("--cost", sk.cost, "cost matrix file")->required();
  sk_cmd->add_option("--gamma", sk.gamma, "entropic regularization");
  sk_cmd->add_option("--tol", sk.tol, "marginal error tolerance");
  sk_cmd->add_option("--max-iters", sk.max_iters, "iteration budget");
  sk_cmd->add_option("--out", sk.out, "coupling CSV (stdout if absent)");
  sk_cmd->add_option("--trace", sk.trace, "marginal error per iteration");

  GraphsExperimentOptions graphs;
  std::optional<std::size_t> graphs_threads;
  std::string graphs_out = "results/graphs";
  auto* graphs_cmd = app.add_subcommand("exp-graphs", "iterations to converge per topology");
  graphs_cmd->add_option("--nodes", graphs.nodes, "agents per graph");
  graphs_cmd->add_option("--seed", graphs.seed, "seed for the random marginals");
  graphs_cmd->add_option("--capacity", graphs.capacity, "uniform arc capacity");
  graphs_cmd->add_option("--max-iters", graphs.max_iters, "iteration budget per cell");
  graphs_cmd->add_option("--gammas", graphs.gammas, "regularization grid (before division by |V|)");
  graphs_cmd->add_option("--out", graphs_out, "output directory");
  graphs_cmd->add_option("--threads", graphs_threads, "worker threads");

  CompareOptions compare;
  std::optional<std::size_t> compare_threads;
  std::string compare_out = "results/compare";
  auto* compare_cmd = app.add_subcommand("exp-compare", "quadratic vs entropic OT on a bipartite graph");
  compare_cmd->add_option("--seed", compare.seed, "seed for costs and marginals")->required();
  compare_cmd->add_option("--half", compare.half, "number of sources (= sinks)");
  compare_cmd->add_option("--gammas", compare.gammas, "regularization grid (before division by |V|)");
  compare_cmd->add_option("--max-iters", compare.max_iters, "ADMM iteration budget");
  compare_cmd->add_option("--out", compare_out, "output directory");
  compare_cmd->add_option("--threads", compare_threads, "worker threads");

  RobustnessOptions robust;
  std::optional<std::size_t> robust_threads;
  std::string robust_out = "results/robust";
  std::string scenario_path;
  auto* robust_cmd = app.add_subcommand("exp-robust", "agent departure mid-run");
  robust_cmd->add_option("--scenario", scenario_path, "scenario file with a departure event");
  robust_cmd->add_option("--gammas", robust.gammas, "regularization grid (before division by |V|)");
  robust_cmd->add_option("--max-iters", robust.max_iters, "iteration budget");
  robust_cmd->add_option("--out", robust_out, "output directory");
  robust_cmd->add_option("--threads", robust_threads, "worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*gen_cmd) return cmd_gen(gen);
    if (*solve_cmd) return cmd_solve(solve);
    if (*central_cmd) return cmd_central(central);
    if (*sk_cmd) return cmd_sinkhorn(sk);
    if (*graphs_cmd) {
      graphs.threads = worker_count(graphs_threads);
      graphs.out_dir = graphs_out;
      print_graphs(run_graphs_experiment(graphs));
      return kExitOk;
    }
    if (*compare_cmd) {
      compare.threads = worker_count(compare_threads);
      compare.out_dir = compare_out;
      print_compare(run_compare_experiment(compare));
      return kExitOk;
    }
    if (*robust_cmd) {
      robust.threads = worker_count(robust_threads);
      robust.out_dir = robust_out;
      const ProblemFile scenario =
          parse_problem(scenario_path.empty() ? default_scenario() : fs::path(scenario_path));
      print_robust(run_robustness_experiment(scenario, robust));
      return kExitOk;
    }
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.position() << ": " << e.reason() << "\n";
    return kExitInput;
  } catch (const ConvergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNotConverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
