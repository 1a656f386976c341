#pragma once

#include <stdexcept>
#include <string>

namespace posesdf {

// Error taxonomy maps onto CLI exit codes: UsageError -> 1, DataError -> 2,
// anything else (NumericError, Error, std::exception) -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UsageError : Error {
  using Error::Error;
};

// Malformed/missing/incompatible inputs: files, magic bytes, shape tables,
// dataset/variant mismatches.
struct DataError : Error {
  using Error::Error;
};

// Runtime numeric failures: divergence, degenerate geometry, non-scalar loss.
struct NumericError : Error {
  using Error::Error;
};

// Iso-surface extraction on a field with no sign change.
struct EmptyFieldError : NumericError {
  using NumericError::NumericError;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

}  // namespace posesdf
