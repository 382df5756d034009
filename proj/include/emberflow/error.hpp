#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace emberflow {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Extents that are zero, or that disagree between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Kernel/stride/padding combinations that do not tile the input exactly.
class GeometryError : public Error {
 public:
  using Error::Error;
};

// API misuse, e.g. backward() without a preceding training forward().
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed input data. `row()` is the 1-based data row, or 0 when the
// problem is not tied to a row (missing file, bad header).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what, std::size_t row = 0)
      : Error(what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

// A NaN or infinity reached a place that requires finite values.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::string slot)
      : Error(what), slot_(std::move(slot)) {}
  const std::string& slot() const noexcept { return slot_; }

 private:
  std::string slot_;
};

class CheckpointError : public Error {
 public:
  enum class Kind { io, bad_magic, unsupported_version, truncated, malformed, shape_mismatch };

  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

const char* to_string(CheckpointError::Kind kind) noexcept;

}  // namespace emberflow
