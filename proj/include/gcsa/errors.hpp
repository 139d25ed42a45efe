#pragma once

#include <stdexcept>
#include <string>

namespace gcsa {

// Error taxonomy. The CLI maps these onto exit codes:
//   UsageError/ConfigError -> 2, DataError/FormatError -> 3,
//   ShapeError/NumericError -> 4.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor dimension mismatch; message names both shapes.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid configuration value or flag combination.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed or missing input data; message names the record where possible.
struct DataError : Error {
  using Error::Error;
};

// Versioned file format mismatch (checkpoints, dataset files).
struct FormatError : DataError {
  using DataError::DataError;
};

// Non-finite values, degenerate norms, diverging optimization.
struct NumericError : Error {
  using Error::Error;
};

// Bad command-line invocation.
struct UsageError : Error {
  using Error::Error;
};

}  // namespace gcsa
