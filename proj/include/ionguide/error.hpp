#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ionguide {

// Coarse error classes. The C API and the CLI map these onto status and exit
// codes, so every thrown Error must carry one.
enum class ErrorKind {
  Validation,   // input violates a documented precondition or type invariant
  Computation,  // numerical failure: no convergence, grid too coarse, not found
  Io,           // file missing, unparsable, or unwritable
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& message)
      : std::runtime_error(message), kind_(kind), code_(std::move(code)) {}

  ErrorKind kind() const noexcept { return kind_; }
  // Short machine-readable tag, e.g. "invalid_geometry" or "grid_too_coarse".
  const std::string& code() const noexcept { return code_; }

 private:
  ErrorKind kind_;
  std::string code_;
};

[[noreturn]] inline void fail_validation(std::string code, const std::string& msg) {
  throw Error(ErrorKind::Validation, std::move(code), msg);
}

[[noreturn]] inline void fail_computation(std::string code, const std::string& msg) {
  throw Error(ErrorKind::Computation, std::move(code), msg);
}

[[noreturn]] inline void fail_io(std::string code, const std::string& msg) {
  throw Error(ErrorKind::Io, std::move(code), msg);
}

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Computation: return "computation";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

}  // namespace ionguide
