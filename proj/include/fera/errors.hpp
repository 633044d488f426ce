#pragma once

#include <stdexcept>
#include <string>

namespace fera {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

/// Raised when an input carries no usable signal (e.g. zero total band energy).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class UnsupportedShapeError : public ShapeError {
 public:
  using ShapeError::ShapeError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A checked property of a run's results did not hold.
class AssertionError : public Error {
 public:
  using Error::Error;
};

}  // namespace fera
