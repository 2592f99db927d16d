#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rankprobe {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed input record. Carries the 1-based line number when known (0 otherwise).
class ParseError : public Error {
  public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : Error(source + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
          line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

class DuplicateIdError : public Error {
  public:
    using Error::Error;
};

/// Referential integrity or shape mismatch (dangling ids, dimension mismatch, truncated payload).
class IntegrityError : public Error {
  public:
    using Error::Error;
};

class LookupError : public Error {
  public:
    using Error::Error;
};

class TransportError : public Error {
  public:
    using Error::Error;
};

/// Run does not cover every query it is evaluated against.
class CoverageError : public Error {
  public:
    using Error::Error;
};

/// nDCG requested for a query without any positive passage.
class UndefinedMetricError : public Error {
  public:
    using Error::Error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

} // namespace rankprobe
