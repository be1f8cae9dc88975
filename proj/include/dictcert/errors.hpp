#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dictcert {

// Base class for all library errors. Messages are prefixed with the module
// that raised them.
class Error : public std::runtime_error {
 public:
  Error(std::string_view module, const std::string& what);
  const std::string& module() const { return module_; }

 private:
  std::string module_;
};

// Bad input: wrong shapes, out-of-range parameters, malformed files.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Numerical failure of an otherwise valid input.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class SingularityError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ConditioningError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Thrown by solvers that cannot make the problem feasible.
class InfeasibleError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace dictcert
