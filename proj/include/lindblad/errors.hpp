#ifndef LINDBLAD_ERRORS_HPP
#define LINDBLAD_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace lindblad {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform (non-square input, row mismatch, ...).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A scalar argument is out of its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// An input violates a documented precondition (e.g. Hermiticity).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A state collapsed to zero norm or trace and cannot be normalized.
class DegenerateStateError : public Error {
 public:
  using Error::Error;
};

/// The reference solver could not certify its answer within budget.
class OracleFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace lindblad

#endif  // LINDBLAD_ERRORS_HPP
