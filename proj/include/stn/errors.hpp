#pragma once

#include <stdexcept>
#include <string>

namespace stn {

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Matrix dimensions incompatible with the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An operation that requires at least one row/sample received none.
class EmptyInputError : public Error {
 public:
  using Error::Error;
};

/// A scalar argument is outside its valid range (e.g. lo >= hi).
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file; the message carries the offending line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A dataset or configuration invariant is violated (e.g. a class with no
/// labeled samples in one domain).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A stratified sample was requested from a class with too few members.
class SamplingError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read, or written.
class FileError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite objective or gradient.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Objective evaluation failed during a gradient check.
class EvalError : public Error {
 public:
  using Error::Error;
};

}  // namespace stn
