#include "otadmm/distributed.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <exception>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include "otadmm/baselines.hpp"
#include "otadmm/errors.hpp"
#include "otadmm/local_qp.hpp"

namespace otadmm {

void check_config(const SolverConfig& config) {
  if (!(config.gamma >= 0.0)) throw InvalidInput("gamma must be nonnegative");
  if (!(config.delta > 0.0)) throw InvalidInput("delta must be positive");
  if (!(config.epsilon > 0.0)) throw InvalidInput("epsilon must be positive");
  if (!(config.qp_tol > 0.0)) throw InvalidInput("qp_tol must be positive");
  if (config.max_iters == 0) throw InvalidInput("max_iters must be positive");
}

namespace {

double supply_tolerance(std::span<const double> rho) {
  double l1 = 0.0;
  for (double v : rho) l1 += std::abs(v);
  return kBalanceTolerance * std::max(1.0, l1);
}

double norm2(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(acc);
}

std::string agent_label(NodeId node) { return "agent " + std::to_string(node + 1); }

QPOptions qp_options(const SolverConfig& config) {
  QPOptions options;
  options.tol = config.qp_tol;
  return options;
}

std::vector<double> solve_subproblem(const BoxQP& qp, const AgentState& agent,
                                     const SolverConfig& config) {
  try {
    return solve_box_qp(qp, qp_options(config), agent.plan).x;
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(agent_label(agent.node) + ": " + e.what(), e.best_iterate(),
                           e.residual(), agent.node);
  }
}

}  // namespace

void EventSchedule::check(std::size_t node_count) const {
  for (std::size_t e = 0; e < events.size(); ++e) {
    const DepartureEvent& ev = events[e];
    if (e > 0 && ev.at_iteration <= events[e - 1].at_iteration) {
      throw InvalidInput("event iterations must be strictly increasing");
    }
    if (ev.node >= node_count) throw InvalidInput("event names unknown node");
    if (ev.new_rho.size() != node_count) throw DimensionError("event new_rho length != |V|");
    const double total = std::accumulate(ev.new_rho.begin(), ev.new_rho.end(), 0.0);
    if (std::abs(total) > supply_tolerance(ev.new_rho)) {
      throw InvalidInput("event new_rho is unbalanced");
    }
  }
}

std::vector<double> primal_update(const DirectedGraph& graph, std::span<const double> capacity,
                                  const AgentState& agent, const NeighborPlans& neighbor_plans,
                                  const SolverConfig& config) {
  if (!agent.active) throw ProtocolError(agent_label(agent.node) + " is inactive");
  const BoxQP qp = assemble_subproblem(graph, capacity, agent, neighbor_plans,
                                       {config.gamma, config.delta});
  return solve_subproblem(qp, agent, config);
}

double dual_update_alpha(const DirectedGraph& graph, const AgentState& agent,
                         std::span<const double> new_plan) {
  if (new_plan.size() != graph.arc_count()) throw DimensionError("plan length != |A|");
  double div = 0.0;
  for (ArcId a : graph.out_arcs(agent.node)) div += new_plan[a];
  for (ArcId a : graph.in_arcs(agent.node)) div -= new_plan[a];
  return agent.alpha + div - agent.local_supply;
}

std::vector<double> dual_update_s(const AgentState& agent, std::span<const double> new_plan,
                                  const NeighborPlans& neighbor_new_plans) {
  const std::size_t m = agent.s.size();
  if (new_plan.size() != m) throw DimensionError("plan length != |A|");
  std::vector<double> s = agent.s;
  auto accumulate = [&](NodeId j) {
    const auto it = neighbor_new_plans.find(j);
    if (it == neighbor_new_plans.end()) {
      throw ProtocolError(agent_label(agent.node) + ": missing plan from neighbor " +
                          std::to_string(j + 1));
    }
    if (it->second.size() != m) throw DimensionError("neighbor plan length != |A|");
    for (std::size_t a = 0; a < m; ++a) s[a] += 0.5 * (new_plan[a] - it->second[a]);
  };
  for (NodeId j : agent.neighbors.outbound) accumulate(j);
  for (NodeId j : agent.neighbors.inbound) accumulate(j);
  return s;
}

double residual_error(std::span<const AgentState> before, std::span<const AgentState> after) {
  if (before.size() != after.size()) throw DimensionError("agent sets differ in size");
  double error = 0.0;
  for (std::size_t i = 0; i < after.size(); ++i) {
    if (!after[i].active) continue;
    error += norm2(after[i].s, before[i].s) + norm2(after[i].plan, before[i].plan) +
             std::abs(after[i].alpha - before[i].alpha);
  }
  return error;
}

// Fixed pool of workers executing a static partition of [0, n).
class DistributedEngine::Workers {
 public:
  explicit Workers(std::size_t count) {
    for (std::size_t t = 0; t < count; ++t) {
      threads_.emplace_back([this, t] { loop(t); });
    }
  }

  ~Workers() {
    {
      std::lock_guard lock(mutex_);
      stop_ = true;
    }
    start_.notify_all();
    for (auto& th : threads_) th.join();
  }

  std::size_t size() const { return threads_.size(); }

  void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    std::unique_lock lock(mutex_);
    task_ = &fn;
    count_ = n;
    pending_ = threads_.size();
    ++generation_;
    start_.notify_all();
    done_.wait(lock, [this] { return pending_ == 0; });
    task_ = nullptr;
  }

 private:
  void loop(std::size_t id) {
    std::size_t seen = 0;
    for (;;) {
      const std::function<void(std::size_t)>* task = nullptr;
      std::size_t n = 0;
      {
        std::unique_lock lock(mutex_);
        start_.wait(lock, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
        task = task_;
        n = count_;
      }
      const std::size_t workers = threads_.size();
      const std::size_t begin = id * n / workers;
      const std::size_t end = (id + 1) * n / workers;
      for (std::size_t k = begin; k < end; ++k) (*task)(k);
      {
        std::lock_guard lock(mutex_);
        if (--pending_ == 0) done_.notify_one();
      }
    }
  }

  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable start_;
  std::condition_variable done_;
  const std::function<void(std::size_t)>* task_ = nullptr;
  std::size_t count_ = 0;
  std::size_t pending_ = 0;
  std::size_t generation_ = 0;
  bool stop_ = false;
};

DistributedEngine::DistributedEngine(DirectedGraph graph, MassProblem problem, SolverConfig config,
                                     std::size_t threads)
    : graph_(std::move(graph)), config_(config) {
  check_config(config_);
  const std::vector<Finding> findings = validate(graph_, problem);
  for (const Finding& f : findings) {
    if (f.severity == Severity::kError) throw InvalidInput(f.message);
    warnings_.push_back(f);
  }
  capacity_ = graph_.capacities();
  if (config_.gamma == 0.0 &&
      std::any_of(capacity_.begin(), capacity_.end(), [](double c) { return std::isinf(c); })) {
    warnings_.push_back({Severity::kWarning, "unbounded-capacity",
                         "gamma = 0 with infinite capacities: iterates may be unbounded"});
  }
  rho_ = problem.rho;
  agents_.reserve(graph_.node_count());
  for (NodeId i = 0; i < graph_.node_count(); ++i) {
    agents_.push_back(AgentState::initial(graph_, i, rho_[i]));
  }
  if (threads > 1) workers_ = std::make_unique<Workers>(threads);
}

DistributedEngine::~DistributedEngine() = default;
DistributedEngine::DistributedEngine(DistributedEngine&&) noexcept = default;
DistributedEngine& DistributedEngine::operator=(DistributedEngine&&) noexcept = default;

void DistributedEngine::for_each_active(const std::function<void(NodeId)>& fn) {
  // Per-agent errors are collected and the one from the lowest agent id is
  // rethrown, independent of scheduling.
  std::vector<std::exception_ptr> errors(agents_.size());
  const std::function<void(std::size_t)> guarded = [&](std::size_t i) {
    if (!agents_[i].active) return;
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (workers_) {
    workers_->parallel_for(agents_.size(), guarded);
  } else {
    for (std::size_t i = 0; i < agents_.size(); ++i) guarded(i);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

TraceRow DistributedEngine::round() {
  const std::size_t n = agents_.size();
  const std::vector<AgentState> before = agents_;

  // Phase A: primal updates against last round's broadcast.
  std::vector<std::vector<double>> broadcast(n);
  for (NodeId i = 0; i < n; ++i) broadcast[i] = agents_[i].plan;
  std::vector<std::vector<double>> next(n);
  const SubproblemParams params{config_.gamma, config_.delta};
  for_each_active([&](NodeId i) {
    const BoxQP qp = detail::assemble_subproblem(graph_, capacity_, agents_[i], broadcast, params);
    next[i] = solve_subproblem(qp, agents_[i], config_);
  });

  // Phase B: exchange.
  for (NodeId i = 0; i < n; ++i) {
    if (agents_[i].active) agents_[i].plan = std::move(next[i]);
  }

  // Phase C: dual updates from this round's plans.
  for_each_active([&](NodeId i) {
    AgentState& agent = agents_[i];
    const std::size_t m = agent.s.size();
    agent.alpha = dual_update_alpha(graph_, agent, agent.plan);
    auto accumulate = [&](NodeId j) {
      const std::vector<double>& pj = agents_[j].plan;
      for (std::size_t a = 0; a < m; ++a) agent.s[a] += 0.5 * (agent.plan[a] - pj[a]);
    };
    for (NodeId j : agent.neighbors.outbound) accumulate(j);
    for (NodeId j : agent.neighbors.inbound) accumulate(j);
  });

  TraceRow row;
  row.iter = iteration_;
  row.error = residual_error(before, agents_);
  row.consensus_gap = consensus_gap();
  row.feasibility = feasibility_residual();
  row.objective = objective(graph_, mean_plan(), total_gamma(config_.gamma, graph_.node_count()));
  ++iteration_;
  return row;
}

RunResult DistributedEngine::run(const EventSchedule& events) {
  events.check(graph_.node_count());
  std::size_t next_event = 0;
  if (!events.events.empty() && events.events.front().at_iteration < iteration_) {
    throw InvalidInput("event at iteration " +
                       std::to_string(events.events.front().at_iteration) +
                       " is in the past");
  }
  RunResult result;
  bool converged = false;
  while (iteration_ < config_.max_iters) {
    while (next_event < events.events.size() &&
           events.events[next_event].at_iteration == iteration_) {
      const DepartureEvent& ev = events.events[next_event];
      apply_departure(ev.node, ev.new_rho);
      ++next_event;
    }
    const TraceRow row = round();
    result.trace.rows.push_back(row);
    if (row.error < config_.epsilon && next_event == events.events.size()) {
      converged = true;
      break;
    }
  }
  result.solution = solution(converged);
  return result;
}

void DistributedEngine::apply_departure(NodeId node, std::span<const double> new_rho) {
  if (node >= agents_.size()) throw InvalidInput("departure of unknown node");
  if (!agents_[node].active) throw InvalidInput(agent_label(node) + " already departed");
  if (new_rho.size() != agents_.size()) throw DimensionError("new_rho length != |V|");

  std::vector<bool> active(agents_.size());
  for (NodeId i = 0; i < agents_.size(); ++i) active[i] = agents_[i].active && i != node;
  double total = 0.0;
  std::vector<double> remaining;
  for (NodeId i = 0; i < agents_.size(); ++i) {
    if (active[i]) {
      total += new_rho[i];
      remaining.push_back(new_rho[i]);
    }
  }
  if (std::abs(total) > supply_tolerance(remaining)) {
    throw InvalidInput("new supply vector is unbalanced over the remaining agents");
  }

  // Weak connectivity of the remaining agents, before any mutation.
  auto drop = [&](std::vector<NodeId> v) {
    std::erase_if(v, [&](NodeId j) { return !active[j]; });
    return v;
  };
  std::vector<NeighborSets> pruned(agents_.size());
  for (NodeId i = 0; i < agents_.size(); ++i) {
    if (!active[i]) continue;
    pruned[i].inbound = drop(agents_[i].neighbors.inbound);
    pruned[i].outbound = drop(agents_[i].neighbors.outbound);
  }
  const auto first = std::find(active.begin(), active.end(), true);
  if (first != active.end()) {
    std::vector<bool> seen(agents_.size(), false);
    std::vector<NodeId> stack{static_cast<NodeId>(first - active.begin())};
    seen[stack.back()] = true;
    while (!stack.empty()) {
      const NodeId u = stack.back();
      stack.pop_back();
      for (const auto* list : {&pruned[u].inbound, &pruned[u].outbound}) {
        for (NodeId v : *list) {
          if (!seen[v]) {
            seen[v] = true;
            stack.push_back(v);
          }
        }
      }
    }
    for (NodeId i = 0; i < agents_.size(); ++i) {
      if (active[i] && !seen[i]) {
        throw InvalidInput("remaining graph disconnected after departure of " + agent_label(node));
      }
    }
  }

  agents_[node].active = false;
  for (ArcId a : graph_.out_arcs(node)) capacity_[a] = 0.0;
  for (ArcId a : graph_.in_arcs(node)) capacity_[a] = 0.0;
  rho_.assign(new_rho.begin(), new_rho.end());
  for (NodeId i = 0; i < agents_.size(); ++i) {
    if (!active[i]) continue;
    agents_[i].neighbors = std::move(pruned[i]);
    agents_[i].local_supply = rho_[i];
  }
}

double DistributedEngine::consensus_gap() const {
  double gap = 0.0;
  for (const Arc& arc : graph_.arcs()) {
    const AgentState& u = agents_[arc.from];
    const AgentState& v = agents_[arc.to];
    if (!u.active || !v.active) continue;
    for (std::size_t a = 0; a < u.plan.size(); ++a) {
      gap = std::max(gap, std::abs(u.plan[a] - v.plan[a]));
    }
  }
  return gap;
}

double DistributedEngine::laplacian_gap() const {
  double gap = 0.0;
  const std::size_t m = graph_.arc_count();
  std::vector<double> residual(m);
  for (const AgentState& agent : agents_) {
    if (!agent.active) continue;
    const double deg = static_cast<double>(agent.neighbors.degree());
    for (std::size_t a = 0; a < m; ++a) residual[a] = deg * agent.plan[a];
    auto subtract = [&](NodeId j) {
      for (std::size_t a = 0; a < m; ++a) residual[a] -= agents_[j].plan[a];
    };
    std::ranges::for_each(agent.neighbors.outbound, subtract);
    std::ranges::for_each(agent.neighbors.inbound, subtract);
    for (double r : residual) gap = std::max(gap, std::abs(r));
  }
  return gap;
}

std::vector<double> DistributedEngine::mean_plan() const {
  std::vector<double> mean(graph_.arc_count(), 0.0);
  std::size_t count = 0;
  for (const AgentState& agent : agents_) {
    if (!agent.active) continue;
    for (std::size_t a = 0; a < mean.size(); ++a) mean[a] += agent.plan[a];
    ++count;
  }
  if (count > 0) {
    for (double& v : mean) v /= static_cast<double>(count);
  }
  return mean;
}

double DistributedEngine::feasibility_residual() const {
  const std::vector<double> div = divergence(graph_, mean_plan());
  double worst = 0.0;
  for (NodeId i = 0; i < agents_.size(); ++i) {
    if (agents_[i].active) worst = std::max(worst, std::abs(div[i] - rho_[i]));
  }
  return worst;
}

Solution DistributedEngine::solution(bool converged) const {
  Solution sol;
  sol.plan = mean_plan();
  for (const AgentState& agent : agents_) sol.per_agent_plans.push_back(agent.plan);
  sol.objective = objective(graph_, sol.plan, total_gamma(config_.gamma, graph_.node_count()));
  sol.converged = converged;
  sol.iterations = iteration_;
  sol.consensus_gap = consensus_gap();
  return sol;
}

}  // namespace otadmm
