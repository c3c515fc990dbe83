#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>

#include "otadmm/errors.hpp"
#include "otadmm/experiments.hpp"

using namespace otadmm;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("otadmm_exp_" + name);
  fs::remove_all(dir);
  return dir;
}

ProblemFile scenario() {
  return parse_problem(fs::path(OTADMM_TEST_DATA_DIR) / "robustness_6node.json");
}

RunTrace rows(std::initializer_list<double> errors) {
  RunTrace t;
  std::size_t k = 0;
  for (double e : errors) t.rows.push_back({k++, e, 0, 0, 0});
  return t;
}

}  // namespace

TEST(RandomMarginals, BalancedAndSeeded) {
  const auto [a, b] = random_marginals(20, 7);
  EXPECT_NEAR(std::accumulate(a.begin(), a.end(), 0.0), std::accumulate(b.begin(), b.end(), 0.0), 1e-15);
  for (double v : a) EXPECT_GT(v, 0.0);
  EXPECT_EQ(random_marginals(20, 7), random_marginals(20, 7));
  EXPECT_NE(random_marginals(20, 7).first, random_marginals(20, 8).first);
}

TEST(ClassifyDiverged, Rule) {
  const RunTrace t = rows({5, 4, 1.0, 0.5, 0.1});
  EXPECT_FALSE(classify_diverged(t, 2, true, 1e3));
  EXPECT_TRUE(classify_diverged(t, 2, false, 1e3));
  const RunTrace blowup = rows({5, 4, 1.0, 10.0, 2000.0});
  EXPECT_TRUE(classify_diverged(blowup, 2, true, 1e3));
  EXPECT_FALSE(classify_diverged(blowup, 2, true, 1e4));
}

TEST(GraphsExperiment, SmallGrid) {
  GraphsExperimentOptions o;
  o.nodes = 6;
  o.kinds = {GraphKind::kComplete, GraphKind::kRing};
  o.gammas = {0.1, 1.0};
  o.out_dir = scratch_dir("graphs");
  const GraphsReport r = run_graphs_experiment(o);
  ASSERT_EQ(r.cells.size(), 4u);
  EXPECT_EQ(r.cell(GraphKind::kComplete, 1.0).messages_per_agent, 5u);
  EXPECT_EQ(r.cell(GraphKind::kRing, 1.0).messages_per_agent, 2u);
  for (const GraphsCell& c : r.cells) {
    EXPECT_TRUE(c.converged);
    EXPECT_EQ(c.iterations, c.trace.size());
    EXPECT_EQ(parse_trace(read_file(c.trace_file)), c.trace);
  }
  EXPECT_TRUE(fs::exists(o.out_dir / "report.json"));
  EXPECT_THROW(r.cell(GraphKind::kStar, 1.0), InvalidInput);

  const GraphsReport again = run_graphs_experiment(o);
  EXPECT_EQ(format_report(again), format_report(r));
  fs::remove_all(o.out_dir);
}

TEST(CompareExperiment, SmallRun) {
  CompareOptions o;
  o.seed = 3;
  o.gammas = {0.1, 1.0};
  o.out_dir = scratch_dir("compare");
  const CompareReport r = run_compare_experiment(o);
  ASSERT_EQ(r.entries.size(), 6u);
  for (double g : o.gammas) {
    EXPECT_EQ(r.entry("sinkhorn", g).sparsity, 25u);
    const auto& d = r.entry("distributed", g);
    const auto& c = r.entry("centralized", g);
    EXPECT_TRUE(d.converged);
    EXPECT_TRUE(c.converged);
    EXPECT_LE(std::abs(d.objective - c.objective), 1e-3 * (1.0 + std::abs(c.objective)));
    EXPECT_LE(d.marginal_error, 1e-2);
    EXPECT_LT(d.sparsity, 25u);
    EXPECT_TRUE(fs::exists(d.coupling_file));
  }
  const ProblemFile inst = compare_instance(o);
  EXPECT_EQ(inst.graph.node_count(), 10u);
  EXPECT_EQ(inst.graph.arc_count(), 25u);
  EXPECT_THROW(r.entry("simplex", 1.0), InvalidInput);
  fs::remove_all(o.out_dir);
}

TEST(RobustnessExperiment, RunsScenario) {
  RobustnessOptions o;
  o.gammas = {0.1};
  o.out_dir = scratch_dir("robust");
  const RobustnessReport r = run_robustness_experiment(scenario(), o);
  ASSERT_EQ(r.runs.size(), 1u);
  const RobustnessRun& run = r.run(0.1);
  EXPECT_EQ(run.event_iteration, 100u);
  EXPECT_TRUE(run.baseline_converged);
  EXPECT_LE(run.baseline_oracle_delta, 1e-2);
  EXPECT_TRUE(run.converged);
  EXPECT_FALSE(run.diverged);
  EXPECT_TRUE(run.oracle_available);
  EXPECT_LE(run.post_oracle_delta, 1e-2);
  EXPECT_TRUE(run.support_on_active_nodes);
  EXPECT_EQ(run.agent_norms.size(), run.trace.size());
  EXPECT_EQ(run.iterations, run.trace.size());
  // the departed agent's norm is frozen after the event
  for (std::size_t k = 101; k < run.agent_norms.size(); ++k) {
    EXPECT_EQ(run.agent_norms[k][5], run.agent_norms[100][5]);
  }
  EXPECT_TRUE(fs::exists(run.norms_file));
  fs::remove_all(o.out_dir);
}

TEST(RobustnessExperiment, NeedsAnEvent) {
  ProblemFile s = scenario();
  s.events.events.clear();
  EXPECT_THROW(run_robustness_experiment(s, {}), InvalidInput);
}
