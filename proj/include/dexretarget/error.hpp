#pragma once

#include <stdexcept>
#include <string>

namespace dexretarget {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input document. `line()` is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& field, int line, const std::string& what)
      : Error(format(field, line, what)), field_(field), line_(line) {}

  const std::string& field() const noexcept { return field_; }
  int line() const noexcept { return line_; }

 private:
  static std::string format(const std::string& field, int line, const std::string& what) {
    std::string msg = "parse error";
    if (line > 0) msg += " at line " + std::to_string(line);
    if (!field.empty()) msg += " in field '" + field + "'";
    return msg + ": " + what;
  }

  std::string field_;
  int line_;
};

/// A structurally valid document that violates a model invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Degenerate calibration input; carries the offending finger/segment.
class CalibrationError : public Error {
 public:
  CalibrationError(int finger, int segment, const std::string& what)
      : Error("calibration error at (" + std::to_string(finger) + ", " + std::to_string(segment) +
              "): " + what),
        finger_(finger),
        segment_(segment) {}

  int finger() const noexcept { return finger_; }
  int segment() const noexcept { return segment_; }

 private:
  int finger_;
  int segment_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace dexretarget
