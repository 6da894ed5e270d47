#pragma once

#include <stdexcept>
#include <string>

namespace sslbench {

// Bad input: malformed config, violated precondition, unsupported option.
// The CLI maps it to exit code 2; every other exception maps to 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A failure that happens while doing otherwise valid work (I/O, a diverging
// loss, a corrupt checkpoint).
class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& message) {
  if (!cond) throw ValidationError(message);
}

}  // namespace sslbench
