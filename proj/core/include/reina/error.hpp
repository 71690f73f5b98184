#pragma once

#include <stdexcept>
#include <string>

namespace reina {

// Enumeration or allocation would exceed a configured bound.
class ResourceLimitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A query falls outside the domain covered by measured data (never extrapolated).
class OutOfDomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable, truncated or version-mismatched artifact.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace reina
