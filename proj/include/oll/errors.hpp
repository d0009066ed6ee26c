#pragma once

#include <stdexcept>
#include <string>

namespace oll {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DuplicateKey : public Error {
 public:
  explicit DuplicateKey(double key)
      : Error("duplicate key " + std::to_string(key)), key_(key) {}
  double key() const noexcept { return key_; }

 private:
  double key_;
};

class MissingKey : public Error {
 public:
  explicit MissingKey(double key)
      : Error("missing key " + std::to_string(key)), key_(key) {}
  double key() const noexcept { return key_; }

 private:
  double key_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

/// An internal invariant failed. Never expected; the state is not usable afterwards.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

/// Top-down allocation was asked to run on a budget with less than one slot of slack.
class AllocationOverflow : public InvariantViolation {
 public:
  using InvariantViolation::InvariantViolation;
};

}  // namespace oll
