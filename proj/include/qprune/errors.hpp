#pragma once

#include <stdexcept>
#include <string>

namespace qprune {

// Thrown when tensor extents disagree. The message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Bad argument to a numerical operator (negative threshold, a <= 0, ...).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operation invoked in the wrong order, e.g. reading gradients before backward.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A non-finite value surfaced inside the graph. `provenance` names the node
// that produced it.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, std::string provenance)
      : std::runtime_error(what), provenance_(std::move(provenance)) {}
  const std::string& provenance() const noexcept { return provenance_; }

 private:
  std::string provenance_;
};

// Malformed run configuration (unknown keys, invalid schedule, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary file does not match its declared layout.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qprune
