#pragma once

#include <stdexcept>
#include <string>

namespace gngan {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Non-finite value or an argument outside an op's domain.
class NumericError : public Error {
public:
  using Error::Error;
};

/// Invalid argument or configuration value.
class ValueError : public Error {
public:
  using Error::Error;
};

/// Malformed or incompatible file.
class FormatError : public Error {
public:
  using Error::Error;
};

}  // namespace gngan
