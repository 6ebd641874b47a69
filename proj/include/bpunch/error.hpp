#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bpunch {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text or binary input. Text formats carry the 1-based line and
/// the offending field; binary formats leave line at 0.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0, std::string field = {})
      : Error(format(what, line, field)), line_(line), field_(std::move(field)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  static std::string format(const std::string& what, std::size_t line, const std::string& field) {
    std::string msg;
    if (line > 0) msg += "line " + std::to_string(line) + ": ";
    if (!field.empty()) msg += "field '" + field + "': ";
    return msg + what;
  }

  std::size_t line_;
  std::string field_;
};

/// Inconsistent graph structure or tensor shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A compression target that cannot be met under the block constraints.
class InfeasibleTarget : public Error {
 public:
  using Error::Error;
};

/// Training diverged (non-finite loss or weights).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace bpunch
