#pragma once

#include <stdexcept>

namespace faim {

/// Bad user-supplied input: malformed files, inconsistent datasets, bad flags.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unknown or unparsable configuration key.
class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

}  // namespace faim
