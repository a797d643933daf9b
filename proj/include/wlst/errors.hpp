#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wlst {

// Base class for all library errors so callers can catch wlst failures
// without swallowing unrelated std exceptions.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// convex_hull input collapsed to a line (or fewer than 3 distinct points).
class DegenerateHullError : public Error {
 public:
  using Error::Error;
};

// No point survived the frustum selection.
class EmptyFrustumError : public Error {
 public:
  using Error::Error;
};

// Frustum contained only ground points, or the largest cluster is too small.
class NoForegroundError : public Error {
 public:
  using Error::Error;
};

// Foreground points have no usable horizontal extent.
class DegenerateFitError : public Error {
 public:
  using Error::Error;
};

// Text parsing failure; carries 1-based line and 0-based field position.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, int field = -1)
      : Error(what + " (line " + std::to_string(line) +
              (field >= 0 ? ", field " + std::to_string(field) : "") + ")"),
        line_(line),
        field_(field) {}

  std::size_t line() const { return line_; }
  int field() const { return field_; }

 private:
  std::size_t line_;
  int field_;
};

class MissingKeyError : public Error {
 public:
  using Error::Error;
};

class MalformedFileError : public Error {
 public:
  using Error::Error;
};

// Input directories do not cover the same frame ids.
class FrameMismatchError : public Error {
 public:
  using Error::Error;
};

// closed_gap with oracle == source-only.
class DivisionByZeroError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace wlst
