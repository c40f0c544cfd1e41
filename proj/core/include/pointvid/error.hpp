#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pointvid {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed on-disk data. Carries the byte offset at which parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// A required input file or directory is missing or unusable.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss or gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value violates a documented type invariant (non-unit quaternion, NaN, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Point lies outside the camera's valid depth range.
class ProjectionError : public Error {
 public:
  using Error::Error;
};

class GraphError : public Error {
 public:
  using Error::Error;
};

/// The point-grid pipeline cannot proceed (e.g. nothing to interpolate from).
class PipelineError : public Error {
 public:
  using Error::Error;
};

/// Parameter layout does not match what the caller expects.
class LayoutError : public Error {
 public:
  using Error::Error;
};

/// A training stage was started from an incompatible (or missing) checkpoint.
class StagingError : public Error {
 public:
  using Error::Error;
};

}  // namespace pointvid
