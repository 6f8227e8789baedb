#pragma once

#include <stdexcept>
#include <string>

namespace connstream {

/// Base for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or out-of-range parameter.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Operand shapes do not line up.
class DimensionError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};

/// A metric needs more trials than have been accumulated (USPLI with K = 1).
class DegenerateTrialCountError : public Error {
 public:
  using Error::Error;
};

/// Nothing to compute on (empty queue, zero trials).
class NoDataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class StreamError : public Error {
 public:
  using Error::Error;
};

/// Requested samples have already been overwritten in a ring buffer.
class DataLossError : public StreamError {
 public:
  using StreamError::StreamError;
};

/// Host resource unavailable (port in use, unreadable device).
class EnvironmentError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, double condition_estimate)
      : Error(what), condition_estimate_(condition_estimate) {}

  double condition_estimate() const noexcept { return condition_estimate_; }

 private:
  double condition_estimate_;
};

}  // namespace connstream
