#pragma once

#include <stdexcept>

namespace qbatt {

// Bad inputs. The CLI maps these to exit code 2.
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct SizeError : ValidationError {
  using ValidationError::ValidationError;
};

struct RangeError : ValidationError {
  using ValidationError::ValidationError;
};

// Failures during a run. Exit code 3.
struct RuntimeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ProtocolStuck : RuntimeFailure {
  using RuntimeFailure::RuntimeFailure;
};

struct InternalError : RuntimeFailure {
  using RuntimeFailure::RuntimeFailure;
};

}  // namespace qbatt
