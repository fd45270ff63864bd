#pragma once

#include <stdexcept>
#include <string>

namespace posefit {

// Precondition or shape/dimension violation on a library call.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent configuration (maps to CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing, corrupt or mismatched input data (maps to CLI exit code 3).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Too many frames flagged by the solver (maps to CLI exit code 4).
class FlaggedFramesError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}
}  // namespace detail

}  // namespace posefit
