#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sofia {

/// Shapes, ranks or lengths that do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Fewer time steps than the method needs (three seasons).
class InsufficientHistoryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite or otherwise unusable input values.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid configuration values, or state that no longer matches its stream.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A metric whose value is undefined (empty series, zero-norm truth).
class MetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed text input. Carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A record index outside the declared tensor shape.
class BoundsError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

}  // namespace sofia
