#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace modeforge {

// Error taxonomy mirrored by the C API status codes and the CLI exit codes.
enum class ErrorKind {
  Config,   // rejected configuration: unknown key, constraint violation
  Solver,   // linear solve, eigensolve, or optimization failure
  Fit,      // nonlinear fit failure
  Io,       // missing, unreadable, or malformed file
  Invalid,  // API misuse: null handle, dimension mismatch
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, std::string message) {
  throw Error(kind, std::move(message));
}

inline void require(bool ok, ErrorKind kind, const std::string& message) {
  if (!ok) fail(kind, message);
}

}  // namespace modeforge
