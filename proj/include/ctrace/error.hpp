#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ctrace {

/// Broad failure category. The CLI maps each kind to a distinct exit code.
enum class ErrorKind {
  Shape,          ///< tensor or sequence dimensions disagree
  Range,          ///< index outside its valid range
  Format,         ///< malformed weight container, dataset, or results document
  Io,             ///< file missing, unreadable, or unwritable
  InvalidSpec,    ///< configuration or oracle spec violates its invariants
  NoValidSamples, ///< every sample was excluded by the validity filter
  NoGap,          ///< P_clean - P_corrupted is not above the guard band
  Numeric,        ///< NaN or Inf produced mid computation
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ctrace
