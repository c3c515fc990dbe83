#include <algorithm>
#include <cmath>
#include <numeric>

#include "otadmm/baselines.hpp"
#include "otadmm/errors.hpp"

namespace otadmm {

namespace {

void check_inputs(const Matrix& cost, std::span<const double> a, std::span<const double> b,
                  double gamma) {
  if (cost.rows == 0 || cost.cols == 0) throw DimensionError("empty cost matrix");
  if (cost.data.size() != cost.rows * cost.cols) throw DimensionError("cost matrix storage");
  if (a.size() != cost.rows || b.size() != cost.cols) {
    throw DimensionError("marginal lengths do not match the cost matrix");
  }
  if (!(gamma > 0.0)) throw InvalidInput("sinkhorn needs gamma > 0");
  for (double v : a) {
    if (!(v > 0.0)) throw InvalidInput("row marginal must be positive");
  }
  for (double v : b) {
    if (!(v > 0.0)) throw InvalidInput("column marginal must be positive");
  }
  const double sa = std::accumulate(a.begin(), a.end(), 0.0);
  const double sb = std::accumulate(b.begin(), b.end(), 0.0);
  if (std::abs(sa - sb) > 1e-12 * std::max(1.0, sa)) {
    throw InvalidInput("marginals have different totals");
  }
}

double log_sum_exp(std::span<const double> v) {
  const double peak = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(peak)) return peak;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - peak);
  return peak + std::log(acc);
}

// Marginals of the current coupling and their L1 mismatch.
void finish(Coupling& out, std::span<const double> a, std::span<const double> b) {
  const Matrix& p = out.matrix;
  out.row_marginal.assign(p.rows, 0.0);
  out.col_marginal.assign(p.cols, 0.0);
  for (std::size_t i = 0; i < p.rows; ++i) {
    for (std::size_t j = 0; j < p.cols; ++j) {
      out.row_marginal[i] += p(i, j);
      out.col_marginal[j] += p(i, j);
    }
  }
  double err = 0.0;
  for (std::size_t i = 0; i < p.rows; ++i) err += std::abs(out.row_marginal[i] - a[i]);
  for (std::size_t j = 0; j < p.cols; ++j) err += std::abs(out.col_marginal[j] - b[j]);
  out.marginal_error = err;
  out.error_history.push_back(err);
}

Coupling scaling_iterations(const Matrix& kernel, std::span<const double> a,
                            std::span<const double> b, const SinkhornOptions& options) {
  const std::size_t n = kernel.rows;
  const std::size_t m = kernel.cols;
  std::vector<double> u(n, 1.0);
  std::vector<double> v(m, 1.0);
  Coupling out;
  out.matrix = Matrix(n, m);
  for (std::size_t it = 0; it < options.max_iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double kv = 0.0;
      for (std::size_t j = 0; j < m; ++j) kv += kernel(i, j) * v[j];
      u[i] = a[i] / kv;
    }
    for (std::size_t j = 0; j < m; ++j) {
      double ku = 0.0;
      for (std::size_t i = 0; i < n; ++i) ku += kernel(i, j) * u[i];
      v[j] = b[j] / ku;
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) out.matrix(i, j) = u[i] * kernel(i, j) * v[j];
    }
    finish(out, a, b);
    out.iterations = it + 1;
    if (out.marginal_error <= options.tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

Coupling log_domain_iterations(const Matrix& cost, std::span<const double> a,
                               std::span<const double> b, double gamma,
                               const SinkhornOptions& options) {
  const std::size_t n = cost.rows;
  const std::size_t m = cost.cols;
  std::vector<double> f(n, 0.0);
  std::vector<double> g(m, 0.0);
  std::vector<double> row(m);
  std::vector<double> col(n);
  Coupling out;
  out.log_domain = true;
  out.matrix = Matrix(n, m);
  for (std::size_t it = 0; it < options.max_iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) row[j] = (g[j] - cost(i, j)) / gamma;
      f[i] = gamma * (std::log(a[i]) - log_sum_exp(row));
    }
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < n; ++i) col[i] = (f[i] - cost(i, j)) / gamma;
      g[j] = gamma * (std::log(b[j]) - log_sum_exp(col));
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        out.matrix(i, j) = std::exp((f[i] + g[j] - cost(i, j)) / gamma);
      }
    }
    finish(out, a, b);
    out.iterations = it + 1;
    if (out.marginal_error <= options.tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace

Coupling sinkhorn(const Matrix& cost, std::span<const double> a, std::span<const double> b,
                  double gamma, const SinkhornOptions& options) {
  check_inputs(cost, a, b, gamma);
  const double max_cost = *std::max_element(cost.data.begin(), cost.data.end());
  Matrix kernel(cost.rows, cost.cols);
  bool underflow = false;
  for (std::size_t k = 0; k < cost.data.size(); ++k) {
    kernel.data[k] = std::exp(-cost.data[k] / gamma);
    underflow = underflow || !(kernel.data[k] > std::numeric_limits<double>::min());
  }
  if (underflow || gamma < options.log_domain_ratio * max_cost) {
    return log_domain_iterations(cost, a, b, gamma, options);
  }
  return scaling_iterations(kernel, a, b, options);
}

}  // namespace otadmm
