#pragma once

#include <stdexcept>
#include <string>

namespace gazekit {

// Bad argument values (shape mismatch, out-of-range parameter, non-finite input).
struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A documented precondition on the inputs does not hold (too few subjects,
// missing masks, empty training set, ...).
struct PreconditionError : std::logic_error {
  using std::logic_error::logic_error;
};

// Malformed or unreadable files: manifests, images, checkpoints.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid experiment / module configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Optimization diverged or a training stage could not complete.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace gazekit
