// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace ltrsum {

// Bad user input: malformed files, out-of-range flags, invalid configs.
// The CLI maps these to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed corpus or checkpoint content; carries the offending location
// in the message.
class ParseError : public ValidationError {
 public:
  explicit ParseError(const std::string& msg) : ValidationError(msg) {}
};

// Infeasible generator or model configuration.
class ConfigError : public ValidationError {
 public:
  explicit ConfigError(const std::string& msg) : ValidationError(msg) {}
};

// Tensor dimension mismatch; indicates a programming error upstream.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite losses, missing files at runtime, and similar failures.
// The CLI maps these to exit code 2.
class RuntimeFailure : public std::runtime_error {
 public:
  explicit RuntimeFailure(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ltrsum
