#pragma once

#include <stdexcept>
#include <string>

namespace atelasso {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input (bad files, dimension mismatches,
/// violated preconditions). CLI maps this to exit code 2.
class InputError : public Error {
public:
  using Error::Error;
};

/// A computation could not be completed on valid input (rank deficiency,
/// degenerate grids, non-convergence). CLI maps this to exit code 3.
class ComputeError : public Error {
public:
  using Error::Error;
};

}  // namespace atelasso
