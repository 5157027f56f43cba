#pragma once

#include <stdexcept>
#include <string>

namespace mils {

/// Root of every exception the engine throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration; `field` names the offending key path when known.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message, std::string field = {})
      : Error(field.empty() ? message : field + ": " + message), message_(message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }
  /// The message without the field prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  std::string message_;
  std::string field_;
};

/// A caller broke an operation precondition (e.g. merging unscored candidates).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Transport, HTTP, auth or payload failure talking to a model service.
class BackendError : public Error {
 public:
  BackendError(const std::string& endpoint, int status, const std::string& message)
      : Error("backend '" + endpoint + "'" + (status > 0 ? " (HTTP " + std::to_string(status) + ")" : "") +
              ": " + message),
        endpoint_(endpoint),
        status_(status) {}
  const std::string& endpoint() const noexcept { return endpoint_; }
  int status() const noexcept { return status_; }

 private:
  std::string endpoint_;
  int status_ = 0;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

/// The generator produced zero usable candidates; the loop may continue.
class EmptyGenerationError : public GenerationError {
 public:
  using GenerationError::GenerationError;
};

class BootstrapError : public Error {
 public:
  using Error::Error;
};

class ScoringError : public Error {
 public:
  using Error::Error;
};

class SolveError : public Error {
 public:
  using Error::Error;
};

}  // namespace mils
