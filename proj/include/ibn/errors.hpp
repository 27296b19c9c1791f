#pragma once

#include <stdexcept>
#include <string>

namespace ibn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible with the requested operation.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Caller-supplied data violates an operation's precondition.
class ValidationError : public Error {
public:
  using Error::Error;
};

class NotFoundError : public Error {
public:
  using Error::Error;
};

/// Operation is not legal in the current state of an object.
class StateError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

} // namespace ibn
