#pragma once

#include <stdexcept>
#include <string>

namespace gwi {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Family or model parameters that do not define a valid object.
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

/// A count exceeded the 64-bit representation.
class OverflowError : public Error {
 public:
  using Error::Error;
};

/// An estimator denominator vanished on the observed path.
class DegeneratePathError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure such as ODE blow-up.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace gwi
