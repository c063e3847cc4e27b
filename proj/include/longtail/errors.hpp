#pragma once

#include <stdexcept>
#include <string>

namespace longtail {

// Bad caller-supplied value: shape mismatch, unknown id, invalid option.
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Operation invoked in a state that forbids it (e.g. duplicate queue slot).
struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

// Non-finite value where a finite one is required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent experiment configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace longtail
