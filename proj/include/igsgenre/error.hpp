#pragma once

#include <stdexcept>
#include <string>

namespace igsgenre {

/// Base of all library errors. The CLI maps ConfigError to exit code 1 and
/// DataError to exit code 2; anything else is reported as an internal error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad parameters or options supplied by the caller.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data that cannot be used as given.
class DataError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public DataError {
 public:
  using DataError::DataError;
};

/// Well-formed container whose encoding is not supported. `field()` names
/// the offending header field ("format_tag", "channels", ...).
class UnsupportedFormatError : public DataError {
 public:
  UnsupportedFormatError(std::string field, const std::string& detail)
      : DataError("unsupported " + field + ": " + detail), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class DuplicateEntryError : public DataError {
 public:
  using DataError::DataError;
};

class InsufficientDataError : public DataError {
 public:
  using DataError::DataError;
};

class TooShortError : public DataError {
 public:
  using DataError::DataError;
};

class DimensionError : public DataError {
 public:
  using DataError::DataError;
};

class PersistenceError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace igsgenre
