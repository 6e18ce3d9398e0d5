#pragma once

#include <stdexcept>
#include <string>

namespace metampc {

// Invalid configuration: bad layer lists, timing grids, malformed configs.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension mismatch between tensors, states or parameter vectors.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values or diverging iterations.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// OCP solver could not produce a usable iterate.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace metampc
