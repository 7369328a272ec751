#pragma once

#include <stdexcept>
#include <string>

namespace spoofsim {

// Base for every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition on an argument was violated (bad shape, out-of-range value).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A linear system that must be solved is singular or rank deficient.
class SingularSystem : public Error {
 public:
  using Error::Error;
};

// The target branch already sits at or beyond its limit; no attack budget.
class TargetUnreachable : public Error {
 public:
  using Error::Error;
};

// Reading or writing an artifact failed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace spoofsim
