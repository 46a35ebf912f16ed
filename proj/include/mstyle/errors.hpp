#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mstyle {

/// Raised when tensor extents do not conform for an operation.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for NaN/Inf values or failed numeric solves.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an object is used in the wrong lifecycle state.
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for invalid user-supplied configuration values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a joint or correspondence required by an operation is missing.
class MappingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when annotations cannot produce a consistent labeling.
class LabelingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for malformed text or binary input; `line()` is 0 when not applicable.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& message) : std::runtime_error(message), line_(0) {}
  ParseError(std::size_t line, const std::string& message)
      : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace mstyle
