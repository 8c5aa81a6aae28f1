#pragma once

#include <stdexcept>
#include <string>

namespace sflab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInputError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Rejection sampling could not produce a configuration meeting its floor.
class DegenerateConfigurationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

/// A separation assumption required by a bound does not hold.
class AssumptionViolationError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// Requested step size exceeds the stability cap (or the loss went up).
class StepSizeError : public Error {
 public:
  using Error::Error;
};

}  // namespace sflab
