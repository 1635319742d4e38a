#pragma once

#include <stdexcept>
#include <string>

namespace apsense {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file layout (bad magic, truncated payload, missing metadata).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input carrying unusable values (NaN rows, negative durations).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Caller-supplied argument outside an operation's domain.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Delineation found fewer than two bottom peaks.
class NoPulses : public DataError {
 public:
  using DataError::DataError;
};

/// Too few pulses to form every feature series (dPPI needs N >= 3).
class InsufficientPulses : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace apsense
