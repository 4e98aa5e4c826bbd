#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vacscreen {

// Every error carries the name of the module that raised it; what() reads
// "<module>: <message>".
class Error : public std::runtime_error {
 public:
  Error(std::string_view module, const std::string& message)
      : std::runtime_error(std::string(module) + ": " + message),
        module_(module) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

// Bad or missing configuration (empty roster, empty templates, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input files or records.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Input that violates an operation's precondition.
class InputError : public Error {
 public:
  using Error::Error;
};

// Metric with no defined value (AP without positives, AUC with one class).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

// Lookup of a key that the source does not hold.
class MissError : public Error {
 public:
  using Error::Error;
};

}  // namespace vacscreen
