#pragma once

#include <cstddef>
#include <vector>

namespace otadmm {

struct TraceRow {
  std::size_t iter = 0;
  double error = 0.0;
  double consensus_gap = 0.0;
  double feasibility = 0.0;
  double objective = 0.0;

  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

/// One row per completed iteration.
struct RunTrace {
  std::vector<TraceRow> rows;

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }

  friend bool operator==(const RunTrace&, const RunTrace&) = default;
};

}  // namespace otadmm
