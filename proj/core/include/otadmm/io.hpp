#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "otadmm/baselines.hpp"
#include "otadmm/config.hpp"
#include "otadmm/distributed.hpp"
#include "otadmm/graph.hpp"
#include "otadmm/trace.hpp"

namespace otadmm {

/// Everything a problem file describes. Node ids are 1-based on disk and
/// 0-based in memory.
struct ProblemFile {
  DirectedGraph graph;
  MassProblem problem;
  SolverConfig config;
  EventSchedule events;
  /// True when the file gave rho0/rhoInf; false when it gave rho directly.
  bool has_marginals = false;
  std::string description;
};

/// Parses a problem file. Every rejection is a ParseError whose position is a
/// byte offset (syntax) or a JSON pointer (content).
ProblemFile parse_problem_text(std::string_view text);
ProblemFile parse_problem(const std::filesystem::path& path);

std::string format_problem(const ProblemFile& file);
void write_problem(const ProblemFile& file, const std::filesystem::path& path);

/// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);

/// CSV with header iter,error,consensus_gap,feasibility,objective; LF endings.
std::string format_trace(const RunTrace& trace);
void write_trace(const RunTrace& trace, const std::filesystem::path& path);
/// Reads a trace written by write_trace.
RunTrace parse_trace(std::string_view text);

struct PlanMetadata {
  std::string solver;
  double gamma = 0.0;
  double delta = 0.0;
  double epsilon = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
  double objective = 0.0;
  double consensus_gap = 0.0;
};

inline constexpr double kPlanOutputThreshold = 1e-9;

/// JSON {metadata, flows: [{from, to, flow}]} listing flows above 1e-9.
std::string format_plan(const DirectedGraph& graph, std::span<const double> plan,
                        const PlanMetadata& metadata);
void write_plan(const DirectedGraph& graph, std::span<const double> plan,
                const PlanMetadata& metadata, const std::filesystem::path& path);

/// Numbers separated by commas, whitespace or newlines.
std::vector<double> parse_vector(std::string_view text);
std::vector<double> read_vector(const std::filesystem::path& path);
/// One row per non-empty line, entries separated by commas or whitespace.
Matrix parse_matrix(std::string_view text);
Matrix read_matrix(const std::filesystem::path& path);
std::string format_matrix(const Matrix& matrix);
void write_matrix(const Matrix& matrix, const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
/// Writes `contents` to `path`, creating parent directories. Throws Error on failure.
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace otadmm
