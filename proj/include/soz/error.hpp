#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace soz {

// Exit codes used by the command-line front end.
enum class ExitCode : int {
  ok = 0,
  failure = 1,
  config = 2,
  dependency = 3,
  numerical = 4,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept { return ExitCode::failure; }
};

// Invalid user configuration or violated precondition on a config value.
class ConfigError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::config; }
};

// Input outside an operation's mathematical domain (bad shapes, Nyquist, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t byte_offset);
  std::size_t byte_offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

// A pipeline stage was invoked before the stage that produces its inputs.
class DependencyError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::dependency; }
};

class NumericalError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::numerical; }
};

}  // namespace soz
