#pragma once

#include <stdexcept>
#include <string>

namespace ed {

/// Broad failure classes. The CLI maps each to a distinct exit code.
enum class ErrorKind {
  Config,      // invalid hyperparameters or settings
  Input,       // malformed user data: images, prompts, datasets, token ids
  Connection,  // backend handshake, transport or protocol failure
  Internal,    // violated engine invariant
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Input: return "input";
    case ErrorKind::Connection: return "connection";
    case ErrorKind::Internal: return "internal";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorKind::Input, what) {}
};

class InvalidTokenError : public InputError {
 public:
  using InputError::InputError;
};

class UnknownStreamError : public InputError {
 public:
  using InputError::InputError;
};

class ConnectionError : public Error {
 public:
  explicit ConnectionError(const std::string& what)
      : Error(ErrorKind::Connection, what) {}
};

class InternalError : public Error {
 public:
  explicit InternalError(const std::string& what)
      : Error(ErrorKind::Internal, what) {}
};

}  // namespace ed
