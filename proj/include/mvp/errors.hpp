#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mvp {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A transform or intrinsic block violates its invariants.
struct CalibrationError : Error {
  using Error::Error;
};

/// A caller broke an input contract (bad depth, out-of-range class, ...).
struct InputError : Error {
  using Error::Error;
};

/// Malformed file content. `offset` is the byte position where parsing failed.
struct ParseError : Error {
  ParseError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset(offset) {}
  std::uint64_t offset;
};

/// Inconsistent data for a file format (e.g. feature width mismatch).
struct FormatError : Error {
  using Error::Error;
};

}  // namespace mvp
