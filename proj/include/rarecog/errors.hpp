#pragma once

#include <stdexcept>
#include <string>

namespace rarecog {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (files, corpora, model documents).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A precondition on arguments or configuration was violated.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// The optimizer diverged or produced non-finite values.
class NumericalAbort : public Error {
 public:
  using Error::Error;
};

}  // namespace rarecog
