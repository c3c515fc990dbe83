#include <cmath>

#include "otadmm/baselines.hpp"
#include "otadmm/errors.hpp"

namespace otadmm {

double objective(const DirectedGraph& graph, std::span<const double> plan, double gamma) {
  if (plan.size() != graph.arc_count()) throw DimensionError("plan length != |A|");
  double linear = 0.0;
  double norm2 = 0.0;
  for (ArcId a = 0; a < plan.size(); ++a) {
    linear += graph.arc(a).cost * plan[a];
    norm2 += plan[a] * plan[a];
  }
  return linear + 0.5 * gamma * norm2;
}

std::size_t sparsity(std::span<const double> values, double threshold) {
  if (!(threshold > 0.0)) throw InvalidInput("sparsity threshold must be positive");
  std::size_t count = 0;
  for (double v : values) {
    if (std::abs(v) > threshold) ++count;
  }
  return count;
}

}  // namespace otadmm
