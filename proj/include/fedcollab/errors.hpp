#pragma once

#include <stdexcept>
#include <string>

namespace fedcollab {

// Error taxonomy shared by all components. Each maps onto the failure
// class it reports so tests can assert the exact category.

// Tensor or model dimensions do not line up.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A value or argument violates an operation's precondition.
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A value cannot be represented (fixed-point overflow and friends).
struct RangeError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// An API was driven in the wrong order (stale cache, mismatched state).
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

// Malformed external data (IDX files, CSV).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid experiment configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fedcollab
