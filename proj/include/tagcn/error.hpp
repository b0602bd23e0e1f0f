#pragma once

#include <stdexcept>
#include <string>

namespace tagcn {

// Error categories double as machine-readable identifiers: the CLI prints
// them verbatim and maps them to exit codes.
enum class ErrorKind {
  shape,       // extent/rank mismatch in an operation
  validation,  // semantic input errors (bad topology, bad plan, bad config)
  format,      // malformed file contents
  io,          // filesystem failures
  numeric,     // non-finite values where finiteness is required
  usage,       // bad command-line invocation
};

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::shape: return "shape";
    case ErrorKind::validation: return "validation";
    case ErrorKind::format: return "format";
    case ErrorKind::io: return "io";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::usage: return "usage";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace tagcn
