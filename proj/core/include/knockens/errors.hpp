#pragma once

#include <stdexcept>
#include <string>

namespace knockens {

/// Error categories map 1:1 to CLI exit codes.
enum class ErrorCategory : int {
  internal = 1,
  config = 2,
  data = 3,
  numeric = 4,
  io = 5,
};

class Error : public std::runtime_error {
public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }

private:
  ErrorCategory category_;
};

class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

class DataError : public Error {
public:
  explicit DataError(const std::string& what) : Error(ErrorCategory::data, what) {}
};

class NumericError : public Error {
public:
  explicit NumericError(const std::string& what) : Error(ErrorCategory::numeric, what) {}
};

class IoError : public Error {
public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::io, what) {}
};

/// Rethrows `err` with a context prefix, preserving its category.
[[noreturn]] inline void rethrow_with_context(const Error& err, const std::string& context) {
  throw Error(err.category(), context + ": " + err.what());
}

}  // namespace knockens
