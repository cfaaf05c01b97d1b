#pragma once

#include <stdexcept>
#include <string>

namespace gchain {

// Exception families. The CLI maps them onto exit codes:
// ConfigError -> 2, DataError -> 3, NumericError / failed checks -> 4.

struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when an exact computation would exceed its enumeration budget.
struct SizeError : std::length_error {
  using std::length_error::length_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace gchain
