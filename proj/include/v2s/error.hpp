#pragma once

#include <stdexcept>
#include <string>

namespace v2s {

// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension/shape disagreement between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Input data violates a documented precondition (non-finite values,
// out-of-range indices, malformed specs, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// API misuse: calling an operation in a state its contract forbids
// (updating a frozen network, backward with a stale cache, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Too few samples to compute a statistic.
class InsufficientDataError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Training produced a non-finite loss.
class DivergedError : public Error {
 public:
  DivergedError(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

// Filesystem-level failure (open/read/write), with the path in the message.
class IoError : public Error {
 public:
  using Error::Error;
};

// A persisted artifact failed to load. kind() distinguishes the failure
// classes so callers and tests can tell them apart.
class LoadError : public IoError {
 public:
  enum class Kind { bad_magic, bad_version, truncated, bad_checksum, malformed };

  LoadError(Kind kind, const std::string& what) : IoError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Unusable CLI/experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace v2s
