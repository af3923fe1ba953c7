#ifndef SEQMASKS_ERROR_HPP_
#define SEQMASKS_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace seqmasks {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller handed in a value outside an operation's domain (empty mask, bad threshold).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Tensor or grid with the wrong dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent or unknown configuration. Maps to CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Missing, unreadable or malformed data on disk. Maps to CLI exit code 3.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Failure during training or inference (NaN loss, ...). Maps to CLI exit code 4.
class RuntimeFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace seqmasks

#endif  // SEQMASKS_ERROR_HPP_
