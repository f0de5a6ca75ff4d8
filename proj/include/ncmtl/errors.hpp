#pragma once

#include <stdexcept>
#include <string>

namespace ncmtl {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Inconsistent dimensions or invalid run configuration.
struct ConfigError : Error {
  using Error::Error;
};

// Unknown task id or out-of-range index.
struct LookupError : Error {
  using Error::Error;
};

// Tensor shape disagreement between congruent structures.
struct ShapeError : Error {
  using Error::Error;
};

// Operation invoked without its required cached state.
struct StateError : Error {
  using Error::Error;
};

// Value outside its numeric domain (e.g. probability after clamping).
struct NumericError : Error {
  using Error::Error;
};

// Invalid argument value (bad K, bad fold, length mismatch).
struct ArgumentError : Error {
  using Error::Error;
};

// Malformed input file; message carries the line number.
struct ParseError : Error {
  using Error::Error;
};

// Non-finite loss or gradient; message names the offending tensor.
struct DivergedError : Error {
  using Error::Error;
};

// File I/O or checkpoint format failure.
struct IoError : Error {
  using Error::Error;
};

}  // namespace ncmtl
