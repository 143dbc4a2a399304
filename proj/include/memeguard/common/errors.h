#pragma once

#include <stdexcept>
#include <string>

namespace memeguard {

// Bad input: malformed records, violated preconditions, unknown labels.
// The CLI maps this family to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Fatal misconfiguration (missing endpoint, embedding dimension drift).
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// A model or knowledge service failed after retries. Exit code 2.
class ExternalServiceError : public std::runtime_error {
 public:
  ExternalServiceError(const std::string& what, int http_status = 0)
      : std::runtime_error(what), http_status_(http_status) {}

  int http_status() const { return http_status_; }

 private:
  int http_status_;
};

// A state conflict in the annotation store (duplicate submission, cap).
class ConflictError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NotFoundError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace memeguard
