#pragma once

#include <stdexcept>
#include <string>

namespace cfcontra {

/// Shapes or extents that do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A precondition of an operation was violated.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid RunConfig / SynthSpec values or unreadable config documents.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by the training loop when the objective becomes NaN.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cfcontra
