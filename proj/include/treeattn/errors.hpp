#pragma once

#include <stdexcept>
#include <string>

namespace treeattn {

// Base class for everything this library throws; the CLI maps subclasses
// to exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape contract violated (matmul inner dims, elementwise shape, ...).
struct DimensionError : Error {
  using Error::Error;
};

// Caller passed an invalid value (empty list, non-scalar loss, ...).
struct ArgumentError : Error {
  using Error::Error;
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
  using Error::Error;
};

// Malformed text input; message carries the line number or offset.
struct ParseError : Error {
  using Error::Error;
};

// Well-formed input describing an invalid structure (no root, cycle, ...).
struct StructureError : Error {
  using Error::Error;
};

// A file does not match its declared record layout.
struct FormatError : Error {
  using Error::Error;
};

// Invalid or inconsistent run configuration.
struct ConfigError : Error {
  using Error::Error;
};

// A function that must be deterministic produced two different values.
struct ConsistencyError : Error {
  using Error::Error;
};

// Plain-ratio normalization hit a near-zero denominator.
struct DegenerateDenominatorError : Error {
  using Error::Error;
};

// Pearson correlation requested on a zero-variance series.
struct UndefinedCorrelationError : Error {
  using Error::Error;
};

// File missing or unreadable.
struct IoError : Error {
  using Error::Error;
};

}  // namespace treeattn
