#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace er {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A regression system is rank-deficient for the requested ridge coefficient.
class SingularityError : public Error {
 public:
  using Error::Error;
};

/// A computation produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid combination of options, checked before any compute.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed dataset or checkpoint file. `offset()` is the byte position
/// where parsing stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace er
