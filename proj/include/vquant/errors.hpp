#pragma once

#include <stdexcept>
#include <string>

namespace vquant {

// Base class for all toolkit errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Incompatible tensor shapes or ranks.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(what) {}
};

// Invalid configuration, flag value, parameter, or plan. Maps to CLI exit 2.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

// Malformed or truncated file payloads. Maps to CLI exit 3.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(what) {}
};

// Non-finite values where finite ones are required (divergence, bad gradients).
// Maps to CLI exit 4.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(what) {}
};

// Missing or stale internal state (e.g. a layer cache consumed twice).
class StateError : public Error {
 public:
  explicit StateError(const std::string& what) : Error(what) {}
};

}  // namespace vquant
