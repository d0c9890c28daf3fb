#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace devo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numeric parameter is outside its valid range (tau <= 0, delta > 255, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Events arrive out of order or after the query time.
class InputOrderError : public Error {
 public:
  using Error::Error;
};

/// A 3D point lies on or behind the image plane.
class BehindCameraError : public Error {
 public:
  using Error::Error;
};

/// Non-positive depth passed to a back-projection.
class DepthError : public Error {
 public:
  using Error::Error;
};

/// Malformed text or binary input. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Input parsed fine but is inconsistent (size mismatch, non-rigid transform, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A tracking problem without usable residuals.
class DegenerateProblemError : public Error {
 public:
  using Error::Error;
};

/// Trajectory association or alignment could not be computed.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

}  // namespace devo
