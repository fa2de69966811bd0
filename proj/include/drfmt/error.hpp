#pragma once

#include <stdexcept>
#include <string>

namespace drfmt {

// Malformed input text (instance or allocation files).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Instance fails validation, or a caller broke an operation's precondition.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Solver gave up: iteration cap, or an auxiliary LP that should be
// feasible and bounded was not.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A mechanism invariant that the theory guarantees did not hold.
class InvariantBreach : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Exhaustive search refused: the enumeration would exceed its node budget.
class InstanceTooLarge : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace drfmt
