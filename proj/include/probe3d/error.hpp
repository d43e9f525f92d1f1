#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace probe3d {

// Root of every error the library throws. The CLI maps the two families
// below onto exit codes: UsageError -> 1, DataError -> 2, anything else -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

// Bad or inconsistent input data: files, manifests, feature stores.
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

class FormatError : public DataError {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : DataError(what + " (at byte offset " + std::to_string(offset) + ")"),
        reason_(what),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string reason_;
  std::uint64_t offset_;
};

class TruncationError : public DataError {
 public:
  using DataError::DataError;
};

class AnnotationError : public DataError {
 public:
  using DataError::DataError;
};

class TrainingError : public DataError {
 public:
  using DataError::DataError;
};

class MetricError : public DataError {
 public:
  using DataError::DataError;
};

class MissingFeatureError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace probe3d
