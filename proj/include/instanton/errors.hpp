#pragma once

#include <stdexcept>
#include <string>

namespace instanton {

/// Base class for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user-supplied configuration (bad sizes, missing fields, ...).
class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& message)
      : Error(field.empty() ? message : field + ": " + message), field_(field) {}
  explicit ConfigError(const std::string& message) : ConfigError("", message) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Operand dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// API called out of order (e.g. gradient before a forward pass).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A control field value is not strictly positive.
class AdmissibilityError : public Error {
 public:
  using Error::Error;
};

/// Requested value lies outside what the truncated measure can represent.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss, divergence, singular matrices and similar failures.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Parse failure in an input file; carries the offending line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, int line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + message : message), line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace instanton
