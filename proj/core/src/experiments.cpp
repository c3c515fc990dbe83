#include "otadmm/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "otadmm/errors.hpp"

namespace otadmm {

using nlohmann::ordered_json;

namespace {

std::vector<double> normalised_draws(SeededUniform& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.next();
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  for (double& x : v) x /= total;
  return v;
}

// Makes sum(b) == sum(a) exactly, absorbing the rounding into the largest entry.
void match_total(std::span<const double> a, std::vector<double>& b) {
  const double gap = std::accumulate(a.begin(), a.end(), 0.0) -
                     std::accumulate(b.begin(), b.end(), 0.0);
  *std::max_element(b.begin(), b.end()) += gap;
}

std::size_t distinct_neighbors(const NeighborSets& n) {
  std::set<NodeId> all(n.inbound.begin(), n.inbound.end());
  all.insert(n.outbound.begin(), n.outbound.end());
  return all.size();
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, std::abs(a[k] - b[k]));
  return d;
}

double norm2(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

std::string gamma_tag(double gamma) { return "gamma_" + format_double(gamma); }

ordered_json json_number(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
}

ordered_json json_vector(std::span<const double> v) {
  ordered_json out = ordered_json::array();
  for (double x : v) out.push_back(json_number(x));
  return out;
}

ordered_json json_flows(const DirectedGraph& graph, std::span<const double> plan) {
  ordered_json flows = ordered_json::array();
  for (ArcId a = 0; a < graph.arc_count(); ++a) {
    if (plan[a] > kPlanOutputThreshold) {
      flows.push_back({{"from", graph.arc(a).from + 1},
                       {"to", graph.arc(a).to + 1},
                       {"flow", plan[a]}});
    }
  }
  return flows;
}

std::string dump(const ordered_json& doc) { return doc.dump(2) + "\n"; }

Matrix bipartite_coupling(std::span<const double> plan, std::size_t half) {
  Matrix m(half, half);
  std::copy(plan.begin(), plan.end(), m.data.begin());
  return m;
}

}  // namespace

std::pair<std::vector<double>, std::vector<double>> random_marginals(std::size_t n,
                                                                     std::uint64_t seed) {
  SeededUniform rng(seed);
  std::vector<double> a = normalised_draws(rng, n);
  std::vector<double> b = normalised_draws(rng, n);
  match_total(a, b);
  return {std::move(a), std::move(b)};
}

// ---------------------------------------------------------------------------
// Topology comparison

const GraphsCell& GraphsReport::cell(GraphKind kind, double gamma) const {
  for (const GraphsCell& c : cells) {
    if (c.kind == kind && c.gamma == gamma) return c;
  }
  throw InvalidInput("no cell for " + to_string(kind) + " at gamma " + format_double(gamma));
}

GraphsReport run_graphs_experiment(const GraphsExperimentOptions& options) {
  if (options.nodes < 3) throw InvalidInput("graphs experiment needs at least 3 nodes");
  GraphsReport report;
  report.options = options;
  auto [rho0, rho_inf] = random_marginals(options.nodes, options.seed);
  report.problem = MassProblem::from_marginals(std::move(rho0), std::move(rho_inf));

  for (GraphKind kind : options.kinds) {
    const DirectedGraph graph = generate(kind, options.nodes, options.cost, options.capacity);
    for (double gamma : options.gammas) {
      SolverConfig config;
      config.gamma = gamma_per_agent(gamma, graph.node_count());
      config.delta = options.delta;
      config.epsilon = options.epsilon;
      config.max_iters = options.max_iters;
      DistributedEngine engine(graph, report.problem, config, options.threads);
      RunResult result = engine.run();

      GraphsCell cell;
      cell.kind = kind;
      cell.gamma = gamma;
      cell.iterations = result.solution.iterations;
      cell.converged = result.solution.converged;
      cell.objective = result.solution.objective;
      cell.consensus_gap = result.solution.consensus_gap;
      cell.feasibility = engine.feasibility_residual();
      for (NodeId i = 0; i < graph.node_count(); ++i) {
        cell.messages_per_agent =
            std::max(cell.messages_per_agent, distinct_neighbors(graph.neighbors(i)));
      }
      cell.plan = std::move(result.solution.plan);
      cell.trace = std::move(result.trace);
      if (!options.out_dir.empty()) {
        const auto path = options.out_dir / (to_string(kind) + "_" + gamma_tag(gamma) + ".csv");
        write_trace(cell.trace, path);
        cell.trace_file = path.string();
      }
      report.cells.push_back(std::move(cell));
    }
  }
  if (!options.out_dir.empty()) write_file(options.out_dir / "report.json", format_report(report));
  return report;
}

std::string format_report(const GraphsReport& report) {
  ordered_json doc;
  doc["scenario"] = "graphs";
  doc["nodes"] = report.options.nodes;
  doc["seed"] = report.options.seed;
  doc["cost"] = report.options.cost;
  doc["capacity"] = json_number(report.options.capacity);
  doc["delta"] = report.options.delta;
  doc["epsilon"] = report.options.epsilon;
  doc["max_iters"] = report.options.max_iters;
  doc["rho0"] = json_vector(report.problem.rho0);
  doc["rhoInf"] = json_vector(report.problem.rho_inf);
  ordered_json cells = ordered_json::array();
  for (const GraphsCell& c : report.cells) {
    cells.push_back({{"graph", to_string(c.kind)},
                     {"gamma", c.gamma},
                     {"iterations", c.iterations},
                     {"converged", c.converged},
                     {"objective", json_number(c.objective)},
                     {"consensus_gap", json_number(c.consensus_gap)},
                     {"feasibility", json_number(c.feasibility)},
                     {"messages_per_agent", c.messages_per_agent},
                     {"trace", c.trace_file}});
  }
  doc["cells"] = std::move(cells);
  return dump(doc);
}

// ---------------------------------------------------------------------------
// Quadratic vs entropic

const CompareEntry& CompareReport::entry(const std::string& method, double gamma) const {
  for (const CompareEntry& e : entries) {
    if (e.method == method && e.gamma == gamma) return e;
  }
  throw InvalidInput("no " + method + " entry at gamma " + format_double(gamma));
}

ProblemFile compare_instance(const CompareOptions& options) {
  const std::size_t h = options.half;
  if (h == 0) throw InvalidInput("compare experiment needs at least one source");
  SeededUniform rng(options.seed);
  std::vector<Arc> arcs;
  arcs.reserve(h * h);
  for (NodeId i = 0; i < h; ++i) {
    for (NodeId j = 0; j < h; ++j) arcs.push_back({i, h + j, rng.next(), options.capacity});
  }
  std::vector<double> a = normalised_draws(rng, h);
  std::vector<double> b = normalised_draws(rng, h);
  match_total(a, b);

  std::vector<double> rho0(2 * h, 0.0);
  std::vector<double> rho_inf(2 * h, 0.0);
  std::copy(a.begin(), a.end(), rho0.begin());
  std::copy(b.begin(), b.end(), rho_inf.begin() + static_cast<std::ptrdiff_t>(h));

  ProblemFile file;
  file.graph = DirectedGraph(2 * h, std::move(arcs));
  file.problem = MassProblem::from_marginals(std::move(rho0), std::move(rho_inf));
  file.config.delta = options.delta;
  file.config.epsilon = options.epsilon;
  file.config.max_iters = options.max_iters;
  file.has_marginals = true;
  file.description = "bipartite " + std::to_string(h) + "x" + std::to_string(h) + ", seed " +
                     std::to_string(options.seed);
  return file;
}

CompareReport run_compare_experiment(const CompareOptions& options) {
  const ProblemFile instance = compare_instance(options);
  const DirectedGraph& graph = instance.graph;
  const std::size_t h = options.half;

  CompareReport report;
  report.options = options;
  report.cost = Matrix(h, h);
  for (ArcId a = 0; a < graph.arc_count(); ++a) report.cost.data[a] = graph.arc(a).cost;
  report.rho0.assign(instance.problem.rho0.begin(), instance.problem.rho0.begin() +
                                                        static_cast<std::ptrdiff_t>(h));
  report.rho_inf.assign(instance.problem.rho_inf.begin() + static_cast<std::ptrdiff_t>(h),
                        instance.problem.rho_inf.end());

  auto transport = [&](const Matrix& p) {
    double acc = 0.0;
    for (std::size_t k = 0; k < p.data.size(); ++k) acc += report.cost.data[k] * p.data[k];
    return acc;
  };
  auto marginal_error = [&](const Matrix& p) {
    double err = 0.0;
    for (std::size_t i = 0; i < h; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < h; ++j) row += p(i, j);
      err += std::abs(row - report.rho0[i]);
    }
    for (std::size_t j = 0; j < h; ++j) {
      double col = 0.0;
      for (std::size_t i = 0; i < h; ++i) col += p(i, j);
      err += std::abs(col - report.rho_inf[j]);
    }
    return err;
  };
  auto finish = [&](CompareEntry& e) {
    e.transport_cost = transport(e.coupling);
    e.marginal_error = marginal_error(e.coupling);
    e.sparsity = sparsity(e.coupling.data, options.sparsity_threshold);
    if (!options.out_dir.empty()) {
      const std::string stem = e.method + "_" + gamma_tag(e.gamma);
      write_trace(e.trace, options.out_dir / (stem + ".csv"));
      write_matrix(e.coupling, options.out_dir / (stem + "_coupling.csv"));
      e.trace_file = (options.out_dir / (stem + ".csv")).string();
      e.coupling_file = (options.out_dir / (stem + "_coupling.csv")).string();
    }
  };

  for (double gamma : options.gammas) {
    SolverConfig config = instance.config;
    config.gamma = gamma_per_agent(gamma, graph.node_count());

    {
      DistributedEngine engine(graph, instance.problem, config, options.threads);
      RunResult result = engine.run();
      CompareEntry e;
      e.method = "distributed";
      e.gamma = gamma;
      e.iterations = result.solution.iterations;
      e.converged = result.solution.converged;
      e.objective = objective(graph, result.solution.plan, gamma);
      e.coupling = bipartite_coupling(result.solution.plan, h);
      e.trace = std::move(result.trace);
      finish(e);
      report.entries.push_back(std::move(e));
    }
    {
      CentralizedResult result = centralized_admm(graph, instance.problem, config);
      CompareEntry e;
      e.method = "centralized";
      e.gamma = gamma;
      e.iterations = result.iterations;
      e.converged = result.converged;
      e.objective = objective(graph, result.plan, gamma);
      e.coupling = bipartite_coupling(result.plan, h);
      e.trace = std::move(result.trace);
      finish(e);
      report.entries.push_back(std::move(e));
    }
    {
      SinkhornOptions sopts;
      sopts.tol = options.sinkhorn_tol;
      sopts.max_iters = options.sinkhorn_max_iters;
      Coupling result = sinkhorn(report.cost, report.rho0, report.rho_inf, gamma, sopts);
      CompareEntry e;
      e.method = "sinkhorn";
      e.gamma = gamma;
      e.iterations = result.iterations;
      e.converged = result.converged;
      e.objective = transport(result.matrix);
      e.coupling = std::move(result.matrix);
      // Sinkhorn keeps marginal errors only; the other columns stay zero.
      for (std::size_t k = 0; k < result.error_history.size(); ++k) {
        TraceRow row;
        row.iter = k;
        row.error = result.error_history[k];
        row.feasibility = result.error_history[k];
        e.trace.rows.push_back(row);
      }
      finish(e);
      report.entries.push_back(std::move(e));
    }
  }
  if (!options.out_dir.empty()) write_file(options.out_dir / "report.json", format_report(report));
  return report;
}

std::string format_report(const CompareReport& report) {
  ordered_json doc;
  doc["scenario"] = "compare";
  doc["seed"] = report.options.seed;
  doc["sources"] = report.options.half;
  doc["sinks"] = report.options.half;
  doc["sparsity_threshold"] = report.options.sparsity_threshold;
  ordered_json cost = ordered_json::array();
  for (std::size_t i = 0; i < report.cost.rows; ++i) {
    cost.push_back(json_vector(std::span<const double>(
        report.cost.data.data() + i * report.cost.cols, report.cost.cols)));
  }
  doc["cost"] = std::move(cost);
  doc["rho0"] = json_vector(report.rho0);
  doc["rhoInf"] = json_vector(report.rho_inf);
  ordered_json entries = ordered_json::array();
  for (const CompareEntry& e : report.entries) {
    entries.push_back({{"method", e.method},
                       {"gamma", e.gamma},
                       {"iterations", e.iterations},
                       {"converged", e.converged},
                       {"objective", json_number(e.objective)},
                       {"transport_cost", json_number(e.transport_cost)},
                       {"marginal_error", json_number(e.marginal_error)},
                       {"sparsity", e.sparsity},
                       {"trace", e.trace_file},
                       {"coupling", e.coupling_file}});
  }
  doc["entries"] = std::move(entries);
  return dump(doc);
}

// ---------------------------------------------------------------------------
// Departure

const RobustnessRun& RobustnessReport::run(double gamma) const {
  for (const RobustnessRun& r : runs) {
    if (r.gamma == gamma) return r;
  }
  throw InvalidInput("no robustness run at gamma " + format_double(gamma));
}

bool classify_diverged(const RunTrace& trace, std::size_t event_iteration, bool converged,
                       double factor) {
  if (!converged) return true;
  double at_event = -1.0;
  for (const TraceRow& row : trace.rows) {
    if (row.iter == event_iteration) at_event = row.error;
    if (at_event >= 0.0 && row.iter > event_iteration && row.error > factor * at_event) {
      return true;
    }
  }
  return false;
}

namespace {

// The problem left after departures: active nodes, arcs between them with
// nonzero capacity, current supply.
struct Reduced {
  DirectedGraph graph;
  MassProblem problem;
  std::vector<ArcId> original_arc;
};

Reduced reduce(const DistributedEngine& engine) {
  const DirectedGraph& g = engine.graph();
  std::vector<NodeId> index(g.node_count(), g.node_count());
  std::vector<double> rho;
  for (NodeId i = 0; i < g.node_count(); ++i) {
    if (engine.agents()[i].active) {
      index[i] = rho.size();
      rho.push_back(engine.supply()[i]);
    }
  }
  Reduced out;
  std::vector<Arc> arcs;
  for (ArcId a = 0; a < g.arc_count(); ++a) {
    const Arc& arc = g.arc(a);
    if (index[arc.from] == g.node_count() || index[arc.to] == g.node_count()) continue;
    if (!(engine.capacities()[a] > 0.0)) continue;
    arcs.push_back({index[arc.from], index[arc.to], arc.cost, engine.capacities()[a]});
    out.original_arc.push_back(a);
  }
  out.graph = DirectedGraph(rho.size(), std::move(arcs));
  out.problem = MassProblem::from_net_supply(std::move(rho));
  return out;
}

}  // namespace

RobustnessReport run_robustness_experiment(const ProblemFile& scenario,
                                           const RobustnessOptions& options) {
  if (scenario.events.events.empty()) {
    throw InvalidInput("robustness scenario has no departure event");
  }
  scenario.events.check(scenario.graph.node_count());
  RobustnessReport report;
  report.options = options;
  report.scenario = scenario;
  const DirectedGraph& graph = scenario.graph;
  const std::size_t n = graph.node_count();

  for (double gamma : options.gammas) {
    SolverConfig config = scenario.config;
    config.gamma = gamma_per_agent(gamma, n);
    config.max_iters = options.max_iters;

    RobustnessRun run;
    run.gamma = gamma;
    run.event_iteration = scenario.events.events.front().at_iteration;

    {
      DistributedEngine engine(graph, scenario.problem, config, options.threads);
      RunResult result = engine.run();
      run.baseline_converged = result.solution.converged;
      run.baseline_iterations = result.solution.iterations;
      run.baseline_plan = std::move(result.solution.plan);
      const std::vector<double> oracle = reference_solution(graph, scenario.problem, config.gamma);
      run.baseline_oracle_delta = max_abs_diff(run.baseline_plan, oracle);
    }

    DistributedEngine engine(graph, scenario.problem, config, options.threads);
    std::size_t next_event = 0;
    const auto& events = scenario.events.events;
    while (engine.iteration() < config.max_iters) {
      while (next_event < events.size() && events[next_event].at_iteration == engine.iteration()) {
        engine.apply_departure(events[next_event].node, events[next_event].new_rho);
        ++next_event;
      }
      const TraceRow row = engine.round();
      run.trace.rows.push_back(row);
      std::vector<double> norms(n);
      for (NodeId i = 0; i < n; ++i) norms[i] = norm2(engine.agents()[i].plan);
      run.agent_norms.push_back(std::move(norms));
      if (next_event == events.size() && row.error < config.epsilon) {
        run.converged = true;
        break;
      }
    }
    run.iterations = engine.iteration();
    run.plan = engine.mean_plan();
    run.diverged = classify_diverged(run.trace, run.event_iteration, run.converged,
                                     options.divergence_factor);

    run.support_on_active_nodes = true;
    for (ArcId a = 0; a < graph.arc_count(); ++a) {
      if (run.plan[a] > options.support_threshold) {
        const Arc& arc = graph.arc(a);
        run.support.emplace_back(arc.from, arc.to);
        if (!engine.agents()[arc.from].active || !engine.agents()[arc.to].active) {
          run.support_on_active_nodes = false;
        }
      }
    }

    const Reduced reduced = reduce(engine);
    if (!has_errors(validate(reduced.graph, reduced.problem))) {
      try {
        const std::vector<double> small =
            reference_solution(reduced.graph, reduced.problem, config.gamma);
        std::vector<double> full(graph.arc_count(), 0.0);
        for (std::size_t k = 0; k < small.size(); ++k) full[reduced.original_arc[k]] = small[k];
        run.post_oracle_delta = max_abs_diff(run.plan, full);
        run.oracle_available = true;
      } catch (const ConvergenceError&) {
        run.oracle_available = false;
      }
    }

    if (!options.out_dir.empty()) {
      const std::string stem = gamma_tag(gamma);
      const auto trace_path = options.out_dir / (stem + ".csv");
      write_trace(run.trace, trace_path);
      run.trace_file = trace_path.string();
      std::string csv = "iter";
      for (NodeId i = 0; i < n; ++i) csv += ",agent" + std::to_string(i + 1);
      csv += "\n";
      for (std::size_t k = 0; k < run.agent_norms.size(); ++k) {
        csv += std::to_string(run.trace.rows[k].iter);
        for (double v : run.agent_norms[k]) csv += "," + format_double(v);
        csv += "\n";
      }
      const auto norms_path = options.out_dir / (stem + "_norms.csv");
      write_file(norms_path, csv);
      run.norms_file = norms_path.string();
    }
    report.runs.push_back(std::move(run));
  }
  if (!options.out_dir.empty()) write_file(options.out_dir / "report.json", format_report(report));
  return report;
}

std::string format_report(const RobustnessReport& report) {
  const DirectedGraph& graph = report.scenario.graph;
  ordered_json doc;
  doc["scenario"] = "robustness";
  doc["description"] = report.scenario.description;
  doc["divergence_factor"] = report.options.divergence_factor;
  ordered_json runs = ordered_json::array();
  for (const RobustnessRun& r : report.runs) {
    ordered_json support = ordered_json::array();
    for (const auto& [from, to] : r.support) support.push_back({from + 1, to + 1});
    ordered_json item;
    item["gamma"] = r.gamma;
    item["baseline"] = {{"converged", r.baseline_converged},
                        {"iterations", r.baseline_iterations},
                        {"oracle_delta", json_number(r.baseline_oracle_delta)},
                        {"flows", json_flows(graph, r.baseline_plan)}};
    item["event_iteration"] = r.event_iteration;
    item["converged"] = r.converged;
    item["diverged"] = r.diverged;
    item["iterations"] = r.iterations;
    item["oracle_available"] = r.oracle_available;
    item["oracle_delta"] = json_number(r.post_oracle_delta);
    item["support"] = std::move(support);
    item["support_on_active_nodes"] = r.support_on_active_nodes;
    item["flows"] = json_flows(graph, r.plan);
    item["trace"] = r.trace_file;
    item["norms"] = r.norms_file;
    runs.push_back(std::move(item));
  }
  doc["runs"] = std::move(runs);
  return dump(doc);
}

}  // namespace otadmm
