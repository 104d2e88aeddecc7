#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ticbench {

/// Base of every error raised by the toolkit. `kind()` is the stable name
/// used in structured CLI diagnostics.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
  virtual const char* kind() const noexcept { return "Error"; }
  /// Validation errors map to CLI exit code 2, everything else to 1.
  virtual bool is_validation() const noexcept { return false; }
};

class ValidationError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "ValidationError"; }
  bool is_validation() const noexcept override { return true; }
};

#define TICBENCH_DEFINE_ERROR(Name, Base)                              \
  class Name : public Base {                                           \
   public:                                                             \
    using Base::Base;                                                  \
    const char* kind() const noexcept override { return #Name; }       \
  };

TICBENCH_DEFINE_ERROR(FormatError, ValidationError)
TICBENCH_DEFINE_ERROR(RangeError, ValidationError)
TICBENCH_DEFINE_ERROR(DuplicateRecordError, ValidationError)
TICBENCH_DEFINE_ERROR(JoinError, ValidationError)
TICBENCH_DEFINE_ERROR(StaleInputError, ValidationError)
TICBENCH_DEFINE_ERROR(EmptySampleError, Error)
TICBENCH_DEFINE_ERROR(WindowTooShortError, Error)
TICBENCH_DEFINE_ERROR(NumericError, Error)
TICBENCH_DEFINE_ERROR(InsufficientDataError, Error)
TICBENCH_DEFINE_ERROR(DegenerateEntropyError, Error)
TICBENCH_DEFINE_ERROR(EmptyContextError, Error)
TICBENCH_DEFINE_ERROR(BackendError, Error)
TICBENCH_DEFINE_ERROR(EmptyPredictionError, Error)
TICBENCH_DEFINE_ERROR(DegenerateLabelError, Error)
TICBENCH_DEFINE_ERROR(SingularSystemError, Error)
TICBENCH_DEFINE_ERROR(DegenerateScaleError, Error)

#undef TICBENCH_DEFINE_ERROR

/// Non-numeric or malformed cell; `row()` is the 1-based line number in the file.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& msg, std::size_t row)
      : ValidationError(msg + " (row " + std::to_string(row) + ")"), row_(row) {}
  const char* kind() const noexcept override { return "ParseError"; }
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class InsufficientSamplesError : public Error {
 public:
  InsufficientSamplesError(const std::string& msg, long layer = -1)
      : Error(layer >= 0 ? msg + " (layer " + std::to_string(layer) + ")" : msg), layer_(layer) {}
  const char* kind() const noexcept override { return "InsufficientSamplesError"; }
  long layer() const noexcept { return layer_; }

 private:
  long layer_;
};

}  // namespace ticbench
