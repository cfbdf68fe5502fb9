#pragma once

#include <stdexcept>
#include <string>

namespace hurricast {

/// Shape or size mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input file or record.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Value outside its admissible domain (negative wind, unknown label, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Operation invoked on an object in the wrong lifecycle state.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid or inconsistent configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerical failure (non-convergence, NaN).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Truncated or otherwise damaged persisted artifact.
class CorruptionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Persisted artifact written by an incompatible format version.
class VersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hurricast
