#pragma once

#include <stdexcept>
#include <string>

namespace trifuse {

/// Broad failure categories. The CLI maps each to a distinct exit code.
enum class ErrorKind {
  invalid_argument,
  shape_mismatch,
  generation,
  degenerate_input,
  invalid_label,
  bad_magic,
  truncated,
  unsupported_modality_count,
  checksum,
  unsupported_format,
  unsupported_datatype,
  unsupported_dimensionality,
  bad_header_size,
  io,
  config,
  divergence,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::invalid_argument: return "invalid argument";
    case ErrorKind::shape_mismatch: return "shape mismatch";
    case ErrorKind::generation: return "generation error";
    case ErrorKind::degenerate_input: return "degenerate input";
    case ErrorKind::invalid_label: return "invalid label";
    case ErrorKind::bad_magic: return "bad magic";
    case ErrorKind::truncated: return "truncated payload";
    case ErrorKind::unsupported_modality_count: return "unsupported modality count";
    case ErrorKind::checksum: return "checksum mismatch";
    case ErrorKind::unsupported_format: return "unsupported format";
    case ErrorKind::unsupported_datatype: return "unsupported datatype";
    case ErrorKind::unsupported_dimensionality: return "unsupported dimensionality";
    case ErrorKind::bad_header_size: return "bad header size";
    case ErrorKind::io: return "i/o error";
    case ErrorKind::config: return "config error";
    case ErrorKind::divergence: return "divergence";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Process exit code for an error category (0 is reserved for success).
inline int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::invalid_argument:
    case ErrorKind::config: return 2;
    case ErrorKind::bad_magic:
    case ErrorKind::truncated:
    case ErrorKind::unsupported_modality_count:
    case ErrorKind::checksum:
    case ErrorKind::unsupported_format:
    case ErrorKind::unsupported_datatype:
    case ErrorKind::unsupported_dimensionality:
    case ErrorKind::bad_header_size:
    case ErrorKind::io: return 3;
    case ErrorKind::shape_mismatch:
    case ErrorKind::generation:
    case ErrorKind::degenerate_input:
    case ErrorKind::invalid_label: return 4;
    case ErrorKind::divergence: return 5;
  }
  return 1;
}

}  // namespace trifuse
