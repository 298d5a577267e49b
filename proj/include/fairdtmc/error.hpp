#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace fairdtmc {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed model / dataset / config input. Carries the offending layer when
/// the problem is local to one layer.
class ModelError : public Error {
 public:
  explicit ModelError(const std::string& what,
                      std::optional<std::size_t> layer = std::nullopt)
      : Error(layer ? "layer " + std::to_string(*layer) + ": " + what : what),
        layer_(layer) {}

  std::optional<std::size_t> layer() const noexcept { return layer_; }

 private:
  std::optional<std::size_t> layer_;
};

/// A precondition on an argument was violated.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// The iterative reachability solver failed to reach its tolerance.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

}  // namespace fairdtmc
