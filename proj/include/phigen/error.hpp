#pragma once

#include <stdexcept>
#include <string>

namespace phigen {

// Bad user input: config keys, file contents, CLI usage. CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or truncated file. Also exit code 2; carries the byte offset when known.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg, long long offset = -1)
      : std::runtime_error(msg), offset_(offset) {}
  long long offset() const { return offset_; }

 private:
  long long offset_;
};

// Non-finite values or diverging optimization. CLI maps this to exit code 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace phigen
