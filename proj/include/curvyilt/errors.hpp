#pragma once

#include <stdexcept>
#include <string>

namespace curvyilt {

// Bytes or text that do not parse as the expected file format.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Parsed data that violates a documented invariant.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operand grids or shapes that do not match.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Parameter outside its documented domain.
struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// I/O failure on an otherwise valid request.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace curvyilt
