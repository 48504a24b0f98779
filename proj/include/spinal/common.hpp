#pragma once

#include <stdexcept>
#include <string>

namespace spinal {

// Precondition / shape-contract violations. Message names the offending
// dimension or argument.
class ContractError : public std::invalid_argument {
 public:
  explicit ContractError(const std::string& msg) : std::invalid_argument(msg) {}
};

// File and format failures; message carries the path.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values, undefined statistics, diverging computations.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw ContractError(msg);
}

}  // namespace spinal
