#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include "otadmm/errors.hpp"
#include "otadmm/io.hpp"

using namespace otadmm;

namespace {

const std::string kTwoNode = R"({
  "nodes": 2,
  "arcs": [{"from": 1, "to": 2, "cost": 1, "capacity": 10}],
  "rho": [1, -1]
})";

std::string position_of(const std::string& text) {
  try {
    parse_problem_text(text);
  } catch (const ParseError& e) {
    return e.position();
  }
  return "<parsed>";
}

void expect_same(const ProblemFile& a, const ProblemFile& b) {
  EXPECT_EQ(a.graph, b.graph);
  EXPECT_EQ(a.problem.rho, b.problem.rho);
  EXPECT_EQ(a.problem.rho0, b.problem.rho0);
  EXPECT_EQ(a.problem.rho_inf, b.problem.rho_inf);
  EXPECT_EQ(a.config.gamma, b.config.gamma);
  EXPECT_EQ(a.config.delta, b.config.delta);
  EXPECT_EQ(a.config.epsilon, b.config.epsilon);
  EXPECT_EQ(a.config.max_iters, b.config.max_iters);
  EXPECT_EQ(a.config.qp_tol, b.config.qp_tol);
  EXPECT_EQ(a.events, b.events);
  EXPECT_EQ(a.has_marginals, b.has_marginals);
  EXPECT_EQ(a.description, b.description);
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("otadmm_io_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST(ParseProblem, MinimalTwoNode) {
  const ProblemFile f = parse_problem_text(kTwoNode);
  EXPECT_EQ(f.graph.node_count(), 2u);
  ASSERT_EQ(f.graph.arc_count(), 1u);
  EXPECT_EQ(f.graph.arc(0).from, 0u);
  EXPECT_EQ(f.graph.arc(0).to, 1u);
  EXPECT_EQ(f.problem.rho, (std::vector<double>{1, -1}));
  EXPECT_EQ(f.config.delta, 10.0);
  EXPECT_EQ(f.config.epsilon, 1e-4);
  EXPECT_TRUE(f.events.events.empty());
}

TEST(ParseProblem, RobustnessScenario) {
  const ProblemFile f = parse_problem(std::filesystem::path(OTADMM_TEST_DATA_DIR) /
                                      "robustness_6node.json");
  EXPECT_EQ(f.graph.node_count(), 6u);
  EXPECT_EQ(f.problem.rho, (std::vector<double>{2, -3, -2, 1, 1, 1}));
  ASSERT_EQ(f.events.events.size(), 1u);
  EXPECT_EQ(f.events.events[0].at_iteration, 100u);
  EXPECT_EQ(f.events.events[0].node, 5u);
  EXPECT_EQ(f.events.events[0].new_rho, (std::vector<double>{2, -3, -1, 1, 1, 0}));
}

TEST(ParseProblem, RejectionsCarryPositions) {
  EXPECT_EQ(position_of(R"({"nodes": 2, "arcs": [], "rho": [1, 1]})"), "/rho");
  EXPECT_EQ(position_of(R"({"nodes": 2, "arcs": [], "rho0": [1, 0], "rhoInf": [0, 2]})"), "/rho0");
  EXPECT_EQ(position_of(R"({"nodes": 2, "arcs": [{"from": 1, "to": 3, "cost": 1, "capacity": 1}],
                            "rho": [0, 0]})"),
            "/arcs/0/to");
  EXPECT_EQ(position_of(R"({"nodes": 2, "arcs": [{"from": 1, "to": 2, "cost": -1, "capacity": 1}],
                            "rho": [0, 0]})"),
            "/arcs/0/cost");
  EXPECT_EQ(position_of(R"({"nodes": 2, "arcs": [{"from": 1, "to": 2, "cost": 1, "capacity": 0}],
                            "rho": [0, 0]})"),
            "/arcs/0/capacity");
  EXPECT_EQ(position_of(R"({"nodes": 2, "arcs": [], "rho": [0, 0], "colour": 1})"), "/colour");
  EXPECT_EQ(position_of(R"({"nodes": 2, "arcs": [{"from": 1, "to": 2, "cost": 1, "capacity": 1,
                            "weight": 2}], "rho": [0, 0]})"),
            "/arcs/0/weight");
  EXPECT_EQ(position_of(R"({"nodes": 2, "arcs": [], "rho": [0]})"), "/rho");
  EXPECT_EQ(position_of(R"({"nodes": 2, "arcs": [], "rho": [0, 0], "config": {"delta": 0}})"),
            "/config");
  EXPECT_EQ(position_of(R"({"nodes": 2, "arcs": [], "rho": [0, 0],
                            "events": [{"at": 1, "kind": "join", "node": 1, "new_rho": [0, 0]}]})"),
            "/events/0/kind");
  EXPECT_EQ(position_of("{\"nodes\": 2,").rfind("byte ", 0), 0u);
  EXPECT_EQ(position_of(R"({"arcs": [], "rho": []})"), "/nodes");
}

TEST(ParseProblem, RoundTrip) {
  const ProblemFile original = parse_problem(std::filesystem::path(OTADMM_TEST_DATA_DIR) /
                                             "robustness_6node.json");
  expect_same(parse_problem_text(format_problem(original)), original);

  ProblemFile marg = parse_problem_text(R"({"description": "x", "nodes": 3,
    "arcs": [{"from": 1, "to": 2, "cost": 0.1, "capacity": "inf"},
             {"from": 2, "to": 3, "cost": 0.30000000000000004, "capacity": 2.5}],
    "rho0": [0.7, 0.3, 0], "rhoInf": [0, 0.2, 0.8], "config": {"gamma": 0.05, "qp_tol": 1e-9}})");
  EXPECT_TRUE(marg.has_marginals);
  EXPECT_TRUE(std::isinf(marg.graph.arc(0).capacity));
  expect_same(parse_problem_text(format_problem(marg)), marg);

  const auto dir = scratch_dir("roundtrip");
  write_problem(marg, dir / "nested" / "p.json");
  expect_same(parse_problem(dir / "nested" / "p.json"), marg);
  std::filesystem::remove_all(dir);
}

TEST(ParseProblem, TotalOnMutatedInput) {
  const std::string base = format_problem(parse_problem(
      std::filesystem::path(OTADMM_TEST_DATA_DIR) / "robustness_6node.json"));
  const std::string alphabet = "{}[]\",:0123456789-.eE abcinf\n";
  std::mt19937_64 rng(1);
  int parsed = 0, rejected = 0;
  for (int t = 0; t < 2000; ++t) {
    std::string text = base;
    const int edits = 1 + static_cast<int>(rng() % 4);
    for (int e = 0; e < edits; ++e) {
      const std::size_t pos = rng() % text.size();
      switch (rng() % 3) {
        case 0: text[pos] = alphabet[rng() % alphabet.size()]; break;
        case 1: text.erase(pos, 1 + rng() % 8); break;
        default: text.insert(pos, 1, alphabet[rng() % alphabet.size()]); break;
      }
      if (text.empty()) text = "x";
    }
    try {
      parse_problem_text(text);
      ++parsed;
    } catch (const ParseError& e) {
      EXPECT_FALSE(e.reason().empty());
      ++rejected;
    } catch (const std::exception& e) {
      ADD_FAILURE() << "non-positioned rejection: " << e.what() << "\n" << text;
    }
  }
  EXPECT_GT(rejected, 0);
  EXPECT_EQ(parsed + rejected, 2000);
}

TEST(ParseProblem, MissingFile) {
  EXPECT_THROW(parse_problem("/nonexistent/problem.json"), Error);
}

TEST(Trace, Format) {
  EXPECT_EQ(format_trace({}), "iter,error,consensus_gap,feasibility,objective\n");
  RunTrace t;
  t.rows.push_back({0, 2.05, 0.05, 0.5, 0.1});
  t.rows.push_back({1, 1e-300, 0.0, 0.1 + 0.2, -3.0});
  EXPECT_EQ(format_trace(t),
            "iter,error,consensus_gap,feasibility,objective\n"
            "0,2.05,0.05,0.5,0.1\n"
            "1,1e-300,0,0.30000000000000004,-3\n");
}

TEST(Trace, RoundTripIsExact) {
  std::mt19937_64 rng(2);
  RunTrace t;
  for (std::size_t k = 0; k < 500; ++k) {
    const auto bits = [&] {
      double v;
      do {
        const std::uint64_t r = rng();
        std::memcpy(&v, &r, sizeof v);
      } while (!std::isfinite(v));
      return v;
    };
    t.rows.push_back({k, bits(), bits(), bits(), bits()});
  }
  EXPECT_EQ(parse_trace(format_trace(t)), t);
  const auto dir = scratch_dir("trace");
  write_trace(t, dir / "t.csv");
  EXPECT_EQ(parse_trace(read_file(dir / "t.csv")), t);
  std::filesystem::remove_all(dir);
  EXPECT_THROW(parse_trace("iter,error\n"), ParseError);
  EXPECT_THROW(parse_trace("iter,error,consensus_gap,feasibility,objective\n0,1,2\n"), ParseError);
}

TEST(Plan, Format) {
  const DirectedGraph g(3, {{0, 1, 1.0, 10.0}, {1, 2, 1.0, 10.0}, {2, 0, 1.0, 10.0}});
  PlanMetadata m;
  m.solver = "distributed";
  m.gamma = 0.1;
  m.delta = 10;
  m.epsilon = 1e-4;
  m.converged = true;
  m.iterations = 31;
  const std::string text = format_plan(g, std::vector<double>{0.9999, 1e-10, 0.5}, m);
  EXPECT_NE(text.find("\"from\": 1"), std::string::npos);
  EXPECT_NE(text.find("\"flow\": 0.9999"), std::string::npos);
  EXPECT_NE(text.find("\"from\": 3"), std::string::npos);
  EXPECT_EQ(text.find("\"from\": 2"), std::string::npos);
  EXPECT_NE(text.find("\"converged\": true"), std::string::npos);
  EXPECT_NE(text.find("\"iterations\": 31"), std::string::npos);
  EXPECT_THROW(format_plan(g, std::vector<double>{1.0}, m), DimensionError);
}

TEST(VectorsAndMatrices, Parse) {
  EXPECT_EQ(parse_vector("0.2, 0.3\n0.5\n"), (std::vector<double>{0.2, 0.3, 0.5}));
  EXPECT_EQ(parse_vector("1 2\t3"), (std::vector<double>{1, 2, 3}));
  EXPECT_THROW(parse_vector("1, x"), ParseError);
  const Matrix m = parse_matrix("1,2,3\n4 5 6\r\n\n");
  EXPECT_EQ(m.rows, 2u);
  EXPECT_EQ(m.cols, 3u);
  EXPECT_EQ(m(1, 2), 6.0);
  EXPECT_EQ(parse_matrix(format_matrix(m)).data, m.data);
  EXPECT_THROW(parse_matrix("1,2\n3\n"), ParseError);
  EXPECT_THROW(parse_matrix("\n"), ParseError);
}
