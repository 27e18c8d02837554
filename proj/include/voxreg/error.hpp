#pragma once

#include <stdexcept>
#include <string>

namespace voxreg {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or invalid arguments (shape, geometry, channel mismatch).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

enum class FormatErrc {
  bad_magic,
  bad_version,
  bad_header,
  truncated,
  size_mismatch,
  non_finite,
  unsupported_datatype,
  unsupported_dims,
};

const char* to_string(FormatErrc code);

/// A file was readable but its content violates the expected format.
class FormatError : public IoError {
 public:
  FormatError(FormatErrc code, const std::string& what)
      : IoError(std::string(to_string(code)) + ": " + what), code_(code) {}
  FormatErrc code() const noexcept { return code_; }

 private:
  FormatErrc code_;
};

/// Optimization produced a non-finite value.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, int iteration)
      : Error(what), iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

}  // namespace voxreg
