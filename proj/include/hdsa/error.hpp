#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace hdsa {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigError : Error {
  using Error::Error;
};

// Iterative method failed to meet its tolerance. `trace` holds the
// per-iteration residual (or gradient) norms.
struct NonConvergence : Error {
  NonConvergence(const std::string& what, std::vector<double> trace_)
      : Error(what), trace(std::move(trace_)) {}
  std::vector<double> trace;
};

struct SingularOperator : Error {
  using Error::Error;
};

// CG met a direction with p'Hp <= 0.
struct NonPositiveCurvature : Error {
  NonPositiveCurvature(const std::string& what, double curvature_)
      : Error(what), curvature(curvature_) {}
  double curvature;
};

// Cholesky of a Gram matrix broke down at `pivot` (0-based).
struct CholeskyFailure : Error {
  CholeskyFailure(const std::string& what, std::size_t pivot_, double value_)
      : Error(what), pivot(pivot_), value(value_) {}
  std::size_t pivot;
  double value;
};

inline void require_size(long actual, long expected, const char* what) {
  if (actual != expected) {
    throw DimensionMismatch(std::string(what) + ": expected size " + std::to_string(expected) +
                            ", got " + std::to_string(actual));
  }
}

}  // namespace hdsa
