#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace shapx {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Instance, distribution and model disagree on feature count or domains.
class SignatureError : public Error {
 public:
  using Error::Error;
};

/// A brute-force or enumeration path would exceed its configured cap.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// An operation was called outside its documented precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A model or circuit violates a structural invariant.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// Floating-point result is too close to a decision boundary to be trusted.
class PrecisionAuditError : public Error {
 public:
  using Error::Error;
};

/// Internal consistency check failed (should never happen).
class InternalError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : Error(what + " (line " + std::to_string(line) + ", column " +
              std::to_string(column) + ")"),
        line_(line),
        column_(column) {}

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

}  // namespace shapx
