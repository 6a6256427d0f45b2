#pragma once

#include <stdexcept>
#include <string>

namespace tactis {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration key, value or combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (files, batches, windows).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite losses, failed inversions and similar numerical breakdowns.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace tactis
