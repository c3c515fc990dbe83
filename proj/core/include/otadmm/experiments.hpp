#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "otadmm/baselines.hpp"
#include "otadmm/distributed.hpp"
#include "otadmm/graph.hpp"
#include "otadmm/io.hpp"
#include "otadmm/trace.hpp"

namespace otadmm {

// Experiment drivers. Regularization values in the grids below are the
// user-facing weights; the drivers hand gamma / |V| to the solvers, so the
// consensus problem is  c'plan + gamma/2 ||plan||^2.  Every driver writes its
// files under `out_dir` when that is non-empty.

/// Uniform draws in (0, 1) from mt19937_64. The standard library's
/// distributions are implementation-defined, so the mapping is done here.
class SeededUniform {
 public:
  explicit SeededUniform(std::uint64_t seed) : engine_(seed) {}
  double next() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

/// Balanced random marginals: `n` draws normalised to sum one, twice.
std::pair<std::vector<double>, std::vector<double>> random_marginals(std::size_t n,
                                                                     std::uint64_t seed);

// ---------------------------------------------------------------------------

struct GraphsExperimentOptions {
  std::size_t nodes = 20;
  std::vector<GraphKind> kinds{GraphKind::kLine, GraphKind::kRing, GraphKind::kStar,
                               GraphKind::kComplete};
  std::vector<double> gammas{0.0, 0.1, 1.0};
  double cost = 1.0;
  double capacity = 100.0;
  std::uint64_t seed = 1;
  double delta = 10.0;
  double epsilon = 1e-4;
  std::size_t max_iters = 100000;
  std::size_t threads = 1;
  std::filesystem::path out_dir;
};

struct GraphsCell {
  GraphKind kind = GraphKind::kLine;
  double gamma = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  double objective = 0.0;
  double consensus_gap = 0.0;
  double feasibility = 0.0;
  /// Largest number of distinct neighbors any agent sends to per round.
  std::size_t messages_per_agent = 0;
  std::vector<double> plan;
  RunTrace trace;
  std::string trace_file;
};

struct GraphsReport {
  GraphsExperimentOptions options;
  MassProblem problem;
  std::vector<GraphsCell> cells;

  const GraphsCell& cell(GraphKind kind, double gamma) const;
};

GraphsReport run_graphs_experiment(const GraphsExperimentOptions& options);
std::string format_report(const GraphsReport& report);

// ---------------------------------------------------------------------------

struct CompareOptions {
  std::uint64_t seed = 1;
  std::size_t half = 5;  // sources = sinks = half
  std::vector<double> gammas{0.01, 0.1, 1.0, 10.0};
  double capacity = 10.0;
  double delta = 10.0;
  double epsilon = 1e-4;
  std::size_t max_iters = 200000;
  double sinkhorn_tol = 1e-9;
  std::size_t sinkhorn_max_iters = 200000;
  double sparsity_threshold = 1e-6;
  std::size_t threads = 1;
  std::filesystem::path out_dir;
};

struct CompareEntry {
  std::string method;  // "distributed", "centralized" or "sinkhorn"
  double gamma = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t sparsity = 0;
  double objective = 0.0;  // quadratic objective at gamma; <C,P> for sinkhorn
  double transport_cost = 0.0;
  double marginal_error = 0.0;
  Matrix coupling;         // sources x sinks
  RunTrace trace;
  std::string trace_file;
  std::string coupling_file;
};

struct CompareReport {
  CompareOptions options;
  Matrix cost;
  std::vector<double> rho0;
  std::vector<double> rho_inf;
  std::vector<CompareEntry> entries;

  const CompareEntry& entry(const std::string& method, double gamma) const;
};

/// The bipartite instance the comparison runs on: `half` sources, `half`
/// sinks, seeded costs in (0, 1) and seeded marginals.
ProblemFile compare_instance(const CompareOptions& options);
CompareReport run_compare_experiment(const CompareOptions& options);
std::string format_report(const CompareReport& report);

// ---------------------------------------------------------------------------

struct RobustnessOptions {
  std::vector<double> gammas{0.0, 0.1, 1.0};
  std::size_t max_iters = 20000;
  double divergence_factor = 1e3;
  double support_threshold = 1e-3;
  std::size_t threads = 1;
  std::filesystem::path out_dir;
};

struct RobustnessRun {
  double gamma = 0.0;
  // Reference run without events.
  bool baseline_converged = false;
  std::size_t baseline_iterations = 0;
  std::vector<double> baseline_plan;
  double baseline_oracle_delta = 0.0;
  // Run with the scheduled events.
  std::size_t event_iteration = 0;
  RunTrace trace;
  std::vector<std::vector<double>> agent_norms;  // per round, per agent
  bool converged = false;
  bool diverged = false;
  std::size_t iterations = 0;
  std::vector<double> plan;
  double post_oracle_delta = 0.0;
  bool oracle_available = false;
  std::vector<std::pair<NodeId, NodeId>> support;
  bool support_on_active_nodes = false;
  std::string trace_file;
  std::string norms_file;
};

struct RobustnessReport {
  RobustnessOptions options;
  ProblemFile scenario;
  std::vector<RobustnessRun> runs;

  const RobustnessRun& run(double gamma) const;
};

/// Post-event divergence rule: not converged, or Error_k rose above
/// `factor` times its value in the first round after the event.
bool classify_diverged(const RunTrace& trace, std::size_t event_iteration, bool converged,
                       double factor);

RobustnessReport run_robustness_experiment(const ProblemFile& scenario,
                                           const RobustnessOptions& options);
std::string format_report(const RobustnessReport& report);

}  // namespace otadmm
