#pragma once

#include <stdexcept>
#include <string>

namespace meteo {

// Error taxonomy used across the library. Every public operation reports
// misuse through one of these; numerical code never returns NaN silently.

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor/layer dimension disagreement. Message names both shapes.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid configuration value (hyperparameter out of range, bad scaler, ...).
struct ConfigError : Error {
  using Error::Error;
};

// Serialized file is corrupt, truncated, or of an unknown version.
struct FormatError : Error {
  using Error::Error;
};

// Non-finite value where a finite one is required.
struct NumericError : Error {
  using Error::Error;
};

// Operation invoked without required prior state (e.g. backward without cache).
struct StateError : Error {
  using Error::Error;
};

// Transport-level failure talking to a remote endpoint. Retriable.
struct NetworkError : Error {
  using Error::Error;
};

// Malformed payload or text input.
struct ParseError : Error {
  using Error::Error;
};

// Failure inside a training loop (non-finite gradient, ...).
struct TrainError : Error {
  using Error::Error;
};

}  // namespace meteo
