#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace otadmm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A vector or matrix argument has the wrong length.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Structurally invalid input: bad node id, self-loop, unbalanced supply, ...
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// An agent was handed an incomplete or inconsistent set of neighbor messages.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver hit its iteration cap before reaching tolerance.
/// Carries the best iterate seen so far.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> best_iterate,
                   double residual, std::optional<std::size_t> node = std::nullopt)
      : Error(what),
        best_iterate_(std::move(best_iterate)),
        residual_(residual),
        node_(node) {}

  const std::vector<double>& best_iterate() const { return best_iterate_; }
  double residual() const { return residual_; }
  /// Zero-based id of the agent whose subproblem failed, if any.
  std::optional<std::size_t> node() const { return node_; }

 private:
  std::vector<double> best_iterate_;
  double residual_;
  std::optional<std::size_t> node_;
};

/// Malformed problem/config file. `position` is either a byte offset
/// ("byte 120") or a JSON pointer ("/arcs/3/from").
class ParseError : public Error {
 public:
  ParseError(std::string position, const std::string& reason)
      : Error(position + ": " + reason), position_(std::move(position)), reason_(reason) {}

  const std::string& position() const { return position_; }
  const std::string& reason() const { return reason_; }

 private:
  std::string position_;
  std::string reason_;
};

}  // namespace otadmm
