#pragma once

#include <stdexcept>
#include <string>

namespace nilmformer {

// Invalid configuration, manifest fields, or incompatible shapes. Exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or geometry mismatch between tensors; message names the offenders.
struct ShapeError : ConfigError {
  using ConfigError::ConfigError;
};

// Non-finite values where finite math was required. Exit code 3.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unreadable or unwritable paths. Exit code 4.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent data file contents. Exit code 4.
struct DataError : IoError {
  using IoError::IoError;
};

}  // namespace nilmformer
