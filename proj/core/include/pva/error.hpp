#pragma once

#include <stdexcept>
#include <string>

namespace pva {

// Base of every error raised by the library. Subclasses name the failure
// category so callers (and the CLI exit-code mapping) can tell them apart.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or specification values.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Tensor or layer shape mismatch.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Malformed input data (empty datasets, missing labels, misaligned pairs).
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Text-file parse failures; the message names the offending row.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Binary model-file failures: bad magic, truncation, inconsistent shapes.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Filesystem failures.
class FileError : public Error {
 public:
  using Error::Error;
};

}  // namespace pva
