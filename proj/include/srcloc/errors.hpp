#pragma once

#include <stdexcept>
#include <string>

namespace srcloc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input outside the mathematical domain of an operation (coincident points,
/// times outside the horizon, parameters outside the box).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Operation that does not exist in the model's regularity regime, e.g. the
/// score of a cusp-type likelihood.
class RegimeError : public Error {
 public:
  using Error::Error;
};

/// Invalid scenario configuration. `line` is 1-based, 0 when unknown.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& message, int line = 0)
      : Error(line > 0 ? message + " (line " + std::to_string(line) + ")" : message), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Malformed observation data. `line` is 1-based, 0 when unknown.
class DataError : public Error {
 public:
  DataError(const std::string& message, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + message : message), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Detector configuration that cannot identify the two sources.
class IdentifiabilityError : public Error {
 public:
  using Error::Error;
};

}  // namespace srcloc
