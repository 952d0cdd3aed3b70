#pragma once

#include <stdexcept>
#include <string>

namespace vseg {

// Bad inputs, violated preconditions, malformed files. CLI exit code 1.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Environment failures (I/O and the like). CLI exit code 2.
class RuntimeFailure : public std::runtime_error {
 public:
  explicit RuntimeFailure(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace vseg
