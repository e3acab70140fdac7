#pragma once

#include <stdexcept>
#include <string>

namespace mirror_opt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector/matrix sizes do not agree with the object they are applied to.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf where finite values are required.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Bad argument or configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An iteration blew up (objective, meta-loss or gradient left the finite range).
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// File missing, truncated, or in the wrong format.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mirror_opt
