#include "ctrace/error.hpp"

namespace ctrace {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Range: return "range";
    case ErrorKind::Format: return "format";
    case ErrorKind::Io: return "io";
    case ErrorKind::InvalidSpec: return "invalid_spec";
    case ErrorKind::NoValidSamples: return "no_valid_samples";
    case ErrorKind::NoGap: return "no_gap";
    case ErrorKind::Numeric: return "numeric";
  }
  return "unknown";
}

}  // namespace ctrace
