#pragma once

#include <stdexcept>
#include <string>

namespace ctpipe {

// Error taxonomy maps 1:1 onto CLI exit codes:
//   ConfigError  -> 1 (usage / configuration)
//   DataError    -> 2 (manifest, integrity, shape mismatches)
//   NumericError -> 3 (non-finite values, divergence)
class Error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
  using Error::Error;
};

class DataError : public Error {
  using Error::Error;
};

class NumericError : public Error {
  using Error::Error;
};

// Thrown by match_human when no threshold reaches the target accuracy.
class UnattainableError : public Error {
 public:
  UnattainableError(const std::string& what, double max_achievable)
      : Error(what), max_achievable(max_achievable) {}

  double max_achievable;
};

}  // namespace ctpipe
