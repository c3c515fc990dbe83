#include "otadmm/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "otadmm/errors.hpp"

namespace otadmm {

using nlohmann::json;

namespace {

std::string pointer(const std::string& base, const std::string& key) { return base + "/" + key; }
std::string pointer(const std::string& base, std::size_t index) {
  return base + "/" + std::to_string(index);
}

void reject_unknown(const json& object, const std::string& where,
                    std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, value] : object.items()) {
    bool known = false;
    for (std::string_view a : allowed) known = known || key == a;
    if (!known) throw ParseError(pointer(where, key), "unknown field '" + key + "'");
  }
}

const json& require(const json& object, const std::string& where, const std::string& key) {
  const auto it = object.find(key);
  if (it == object.end()) throw ParseError(pointer(where, key), "missing field '" + key + "'");
  return *it;
}

double as_number(const json& value, const std::string& where) {
  if (!value.is_number()) throw ParseError(where, "expected a number");
  const double v = value.get<double>();
  if (!std::isfinite(v)) throw ParseError(where, "number is not finite");
  return v;
}

std::size_t as_count(const json& value, const std::string& where) {
  if (!value.is_number_unsigned()) throw ParseError(where, "expected a nonnegative integer");
  return value.get<std::size_t>();
}

NodeId as_node(const json& value, const std::string& where, std::size_t node_count) {
  const std::size_t id = as_count(value, where);
  if (id < 1 || id > node_count) {
    throw ParseError(where, "node id " + std::to_string(id) + " outside 1.." +
                                std::to_string(node_count));
  }
  return id - 1;
}

std::vector<double> as_vector(const json& value, const std::string& where, std::size_t length) {
  if (!value.is_array()) throw ParseError(where, "expected an array");
  if (value.size() != length) {
    throw ParseError(where, "expected " + std::to_string(length) + " entries, found " +
                                std::to_string(value.size()));
  }
  std::vector<double> out;
  out.reserve(length);
  for (std::size_t k = 0; k < value.size(); ++k) out.push_back(as_number(value[k], pointer(where, k)));
  return out;
}

double as_capacity(const json& value, const std::string& where) {
  if (value.is_string() && (value == "inf" || value == "infinity")) return kInfiniteCapacity;
  return as_number(value, where);
}

SolverConfig parse_config(const json& value, const std::string& where) {
  if (!value.is_object()) throw ParseError(where, "expected an object");
  reject_unknown(value, where, {"gamma", "delta", "epsilon", "max_iters", "qp_tol"});
  SolverConfig config;
  if (value.contains("gamma")) config.gamma = as_number(value["gamma"], pointer(where, "gamma"));
  if (value.contains("delta")) config.delta = as_number(value["delta"], pointer(where, "delta"));
  if (value.contains("epsilon")) {
    config.epsilon = as_number(value["epsilon"], pointer(where, "epsilon"));
  }
  if (value.contains("max_iters")) {
    config.max_iters = as_count(value["max_iters"], pointer(where, "max_iters"));
  }
  if (value.contains("qp_tol")) config.qp_tol = as_number(value["qp_tol"], pointer(where, "qp_tol"));
  try {
    check_config(config);
  } catch (const InvalidInput& e) {
    throw ParseError(where, e.what());
  }
  return config;
}

ProblemFile parse_document(const json& doc) {
  if (!doc.is_object()) throw ParseError("", "top level must be an object");
  reject_unknown(doc, "",
                 {"description", "nodes", "arcs", "rho0", "rhoInf", "rho", "config", "events"});
  ProblemFile file;
  if (doc.contains("description")) {
    if (!doc["description"].is_string()) throw ParseError("/description", "expected a string");
    file.description = doc["description"].get<std::string>();
  }

  const std::size_t nodes = as_count(require(doc, "", "nodes"), "/nodes");
  if (nodes == 0) throw ParseError("/nodes", "graph must have at least one node");

  const json& arcs = require(doc, "", "arcs");
  if (!arcs.is_array()) throw ParseError("/arcs", "expected an array");
  std::vector<Arc> parsed;
  std::set<std::pair<NodeId, NodeId>> seen;
  for (std::size_t k = 0; k < arcs.size(); ++k) {
    const std::string where = pointer("/arcs", k);
    const json& a = arcs[k];
    if (!a.is_object()) throw ParseError(where, "expected an object");
    reject_unknown(a, where, {"from", "to", "cost", "capacity"});
    Arc arc;
    arc.from = as_node(require(a, where, "from"), pointer(where, "from"), nodes);
    arc.to = as_node(require(a, where, "to"), pointer(where, "to"), nodes);
    arc.cost = as_number(require(a, where, "cost"), pointer(where, "cost"));
    arc.capacity = as_capacity(require(a, where, "capacity"), pointer(where, "capacity"));
    if (arc.from == arc.to) throw ParseError(where, "self-loop");
    if (!seen.emplace(arc.from, arc.to).second) throw ParseError(where, "duplicate arc");
    if (arc.cost < 0.0) throw ParseError(pointer(where, "cost"), "negative cost");
    if (!(arc.capacity > 0.0)) throw ParseError(pointer(where, "capacity"), "nonpositive capacity");
    parsed.push_back(arc);
  }
  file.graph = DirectedGraph(nodes, std::move(parsed));

  const bool has_rho = doc.contains("rho");
  const bool has_pair = doc.contains("rho0") || doc.contains("rhoInf");
  if (has_rho && has_pair) throw ParseError("/rho", "give either rho or rho0/rhoInf, not both");
  if (!has_rho && !has_pair) throw ParseError("/rho", "missing field 'rho' (or 'rho0'/'rhoInf')");
  try {
    if (has_rho) {
      file.problem = MassProblem::from_net_supply(as_vector(doc["rho"], "/rho", nodes));
    } else {
      std::vector<double> rho0 = as_vector(require(doc, "", "rho0"), "/rho0", nodes);
      std::vector<double> rho_inf = as_vector(require(doc, "", "rhoInf"), "/rhoInf", nodes);
      for (std::size_t i = 0; i < nodes; ++i) {
        if (rho0[i] < 0.0) throw ParseError(pointer("/rho0", i), "negative mass");
        if (rho_inf[i] < 0.0) throw ParseError(pointer("/rhoInf", i), "negative mass");
      }
      file.problem = MassProblem::from_marginals(std::move(rho0), std::move(rho_inf));
      file.has_marginals = true;
    }
  } catch (const InvalidInput& e) {
    throw ParseError(has_rho ? "/rho" : "/rho0", e.what());
  }

  if (doc.contains("config")) file.config = parse_config(doc["config"], "/config");

  if (doc.contains("events")) {
    const json& events = doc["events"];
    if (!events.is_array()) throw ParseError("/events", "expected an array");
    for (std::size_t k = 0; k < events.size(); ++k) {
      const std::string where = pointer("/events", k);
      const json& e = events[k];
      if (!e.is_object()) throw ParseError(where, "expected an object");
      reject_unknown(e, where, {"at", "kind", "node", "new_rho"});
      const json& kind = require(e, where, "kind");
      if (kind != "depart") throw ParseError(pointer(where, "kind"), "only 'depart' is supported");
      DepartureEvent ev;
      ev.at_iteration = as_count(require(e, where, "at"), pointer(where, "at"));
      ev.node = as_node(require(e, where, "node"), pointer(where, "node"), nodes);
      ev.new_rho = as_vector(require(e, where, "new_rho"), pointer(where, "new_rho"), nodes);
      file.events.events.push_back(std::move(ev));
    }
    try {
      file.events.check(nodes);
    } catch (const Error& e) {
      throw ParseError("/events", e.what());
    }
  }
  return file;
}

json number_or_inf(double v) {
  if (std::isinf(v)) return "inf";
  return v;
}

}  // namespace

ProblemFile parse_problem_text(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError("byte " + std::to_string(e.byte), "malformed JSON");
  }
  try {
    return parse_document(doc);
  } catch (const ParseError&) {
    throw;
  } catch (const json::exception& e) {
    throw ParseError("", e.what());
  } catch (const Error& e) {
    throw ParseError("/arcs", e.what());
  }
}

ProblemFile parse_problem(const std::filesystem::path& path) {
  return parse_problem_text(read_file(path));
}

std::string format_problem(const ProblemFile& file) {
  json doc;
  if (!file.description.empty()) doc["description"] = file.description;
  doc["nodes"] = file.graph.node_count();
  json arcs = json::array();
  for (const Arc& a : file.graph.arcs()) {
    arcs.push_back({{"from", a.from + 1}, {"to", a.to + 1}, {"cost", a.cost},
                    {"capacity", number_or_inf(a.capacity)}});
  }
  doc["arcs"] = std::move(arcs);
  if (file.has_marginals) {
    doc["rho0"] = file.problem.rho0;
    doc["rhoInf"] = file.problem.rho_inf;
  } else {
    doc["rho"] = file.problem.rho;
  }
  doc["config"] = {{"gamma", file.config.gamma},
                   {"delta", file.config.delta},
                   {"epsilon", file.config.epsilon},
                   {"max_iters", file.config.max_iters},
                   {"qp_tol", file.config.qp_tol}};
  if (!file.events.events.empty()) {
    json events = json::array();
    for (const DepartureEvent& e : file.events.events) {
      events.push_back({{"at", e.at_iteration}, {"kind", "depart"}, {"node", e.node + 1},
                        {"new_rho", e.new_rho}});
    }
    doc["events"] = std::move(events);
  }
  return doc.dump(2) + "\n";
}

void write_problem(const ProblemFile& file, const std::filesystem::path& path) {
  write_file(path, format_problem(file));
}

std::string format_double(double value) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, result.ptr);
}

std::string format_trace(const RunTrace& trace) {
  std::string out = "iter,error,consensus_gap,feasibility,objective\n";
  for (const TraceRow& r : trace.rows) {
    out += std::to_string(r.iter);
    for (double v : {r.error, r.consensus_gap, r.feasibility, r.objective}) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

void write_trace(const RunTrace& trace, const std::filesystem::path& path) {
  write_file(path, format_trace(trace));
}

namespace {

double parse_double(std::string_view token, const std::string& where) {
  while (!token.empty() && (token.front() == ' ' || token.front() == '\t')) token.remove_prefix(1);
  while (!token.empty() && (token.back() == ' ' || token.back() == '\t' || token.back() == '\r')) {
    token.remove_suffix(1);
  }
  double value = 0.0;
  const auto result = std::from_chars(token.data(), token.data() + token.size(), value);
  if (result.ec != std::errc() || result.ptr != token.data() + token.size()) {
    throw ParseError(where, "invalid number '" + std::string(token) + "'");
  }
  return value;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find('\n', start);
    const std::size_t stop = end == std::string_view::npos ? text.size() : end;
    lines.push_back(text.substr(start, stop - start));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return lines;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t k = 0;
  while (k < line.size()) {
    while (k < line.size() && (line[k] == ',' || line[k] == ' ' || line[k] == '\t' || line[k] == '\r')) ++k;
    const std::size_t start = k;
    while (k < line.size() && line[k] != ',' && line[k] != ' ' && line[k] != '\t' && line[k] != '\r') ++k;
    if (k > start) fields.push_back(line.substr(start, k - start));
  }
  return fields;
}

}  // namespace

RunTrace parse_trace(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty() || lines[0] != "iter,error,consensus_gap,feasibility,objective") {
    throw ParseError("line 1", "unexpected trace header");
  }
  RunTrace trace;
  for (std::size_t k = 1; k < lines.size(); ++k) {
    if (lines[k].empty()) continue;
    const std::string where = "line " + std::to_string(k + 1);
    const auto fields = split_fields(lines[k]);
    if (fields.size() != 5) throw ParseError(where, "expected 5 fields");
    TraceRow row;
    row.iter = static_cast<std::size_t>(parse_double(fields[0], where));
    row.error = parse_double(fields[1], where);
    row.consensus_gap = parse_double(fields[2], where);
    row.feasibility = parse_double(fields[3], where);
    row.objective = parse_double(fields[4], where);
    trace.rows.push_back(row);
  }
  return trace;
}

std::string format_plan(const DirectedGraph& graph, std::span<const double> plan,
                        const PlanMetadata& metadata) {
  if (plan.size() != graph.arc_count()) throw DimensionError("plan length != |A|");
  json doc;
  doc["metadata"] = {{"solver", metadata.solver},
                     {"gamma", metadata.gamma},
                     {"delta", metadata.delta},
                     {"epsilon", metadata.epsilon},
                     {"converged", metadata.converged},
                     {"iterations", metadata.iterations},
                     {"objective", metadata.objective},
                     {"consensus_gap", metadata.consensus_gap}};
  json flows = json::array();
  for (ArcId a = 0; a < plan.size(); ++a) {
    if (std::abs(plan[a]) > kPlanOutputThreshold) {
      flows.push_back(
          {{"from", graph.arc(a).from + 1}, {"to", graph.arc(a).to + 1}, {"flow", plan[a]}});
    }
  }
  doc["flows"] = std::move(flows);
  return doc.dump(2) + "\n";
}

void write_plan(const DirectedGraph& graph, std::span<const double> plan,
                const PlanMetadata& metadata, const std::filesystem::path& path) {
  write_file(path, format_plan(graph, plan, metadata));
}

std::vector<double> parse_vector(std::string_view text) {
  std::vector<double> out;
  const auto lines = split_lines(text);
  for (std::size_t k = 0; k < lines.size(); ++k) {
    for (std::string_view field : split_fields(lines[k])) {
      out.push_back(parse_double(field, "line " + std::to_string(k + 1)));
    }
  }
  return out;
}

std::vector<double> read_vector(const std::filesystem::path& path) {
  return parse_vector(read_file(path));
}

Matrix parse_matrix(std::string_view text) {
  std::vector<std::vector<double>> rows;
  const auto lines = split_lines(text);
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const auto fields = split_fields(lines[k]);
    if (fields.empty()) continue;
    std::vector<double> row;
    for (std::string_view field : fields) {
      row.push_back(parse_double(field, "line " + std::to_string(k + 1)));
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError("line " + std::to_string(k + 1), "ragged matrix row");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("line 1", "empty matrix");
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) m(r, c) = rows[r][c];
  }
  return m;
}

Matrix read_matrix(const std::filesystem::path& path) { return parse_matrix(read_file(path)); }

std::string format_matrix(const Matrix& matrix) {
  std::string out;
  for (std::size_t r = 0; r < matrix.rows; ++r) {
    for (std::size_t c = 0; c < matrix.cols; ++c) {
      if (c > 0) out += ',';
      out += format_double(matrix(r, c));
    }
    out += '\n';
  }
  return out;
}

void write_matrix(const Matrix& matrix, const std::filesystem::path& path) {
  write_file(path, format_matrix(matrix));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace otadmm
