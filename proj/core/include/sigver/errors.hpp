#pragma once

#include <stdexcept>
#include <string>

namespace sigver {

// Error taxonomy. The CLI maps these onto exit codes:
// ValidationError/ConfigError -> 1, IoError -> 2, ProtocolError -> 3.

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed model/hyperparameter configuration.
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violations of the experimental protocol (e.g. subject overlap between
// training and evaluation sets).
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sigver
