#pragma once

#include <stdexcept>
#include <string>

namespace stmh {

// Bad inputs: dimension mismatch, non-SPD matrices, out-of-range parameters.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Sampler asked to continue from a state it cannot handle (e.g. zero density).
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Quadrature, eigensolver or power iteration did not converge.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Partition estimation could not collect enough samples at a level.
class EstimationStallError : public std::runtime_error {
 public:
  EstimationStallError(int level, const std::string& what)
      : std::runtime_error(what), level_(level) {}
  int level() const noexcept { return level_; }

 private:
  int level_;
};

class DegenerateRestrictionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PathError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Broken internal invariant; indicates a bug rather than bad input.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace stmh
