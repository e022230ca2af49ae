#pragma once

#include <stdexcept>
#include <string>

namespace landcls {

// Base of every error the engine raises. The C API maps each subclass to a
// status code; the CLI maps status codes to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

// Operation invoked on an object in the wrong state (unpopulated weights,
// missing preprocessing metadata, mismatched caches).
class StateError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

// NaN/Inf produced from finite inputs, or a non-finite training loss.
class NumericalError : public Error {
 public:
  using Error::Error;
};

enum class FormatErrorKind {
  bad_magic,
  unsupported_version,
  checksum_mismatch,
  truncated,
  malformed,
};

const char* to_string(FormatErrorKind kind) noexcept;

// Weight container parse failures.
class FormatError : public Error {
 public:
  FormatError(FormatErrorKind kind, const std::string& what,
              std::string entry = {})
      : Error(std::string(to_string(kind)) + ": " + what),
        kind_(kind),
        entry_(std::move(entry)) {}

  FormatErrorKind kind() const noexcept { return kind_; }
  // Name of the entry being parsed when the error hit, empty if none.
  const std::string& entry() const noexcept { return entry_; }

 private:
  FormatErrorKind kind_;
  std::string entry_;
};

}  // namespace landcls
