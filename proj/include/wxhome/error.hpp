#pragma once

#include <stdexcept>
#include <string>

namespace wxhome {

/// Raised for malformed or inconsistent input data (bad rows, unknown ids,
/// missing observations under the strict policy, degenerate training sets).
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Raised for contract violations on arguments (out-of-range knobs and the like).
class UsageError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

inline std::string at_line(const std::string& path, std::size_t line) {
  return path + ":" + std::to_string(line) + ": ";
}

} // namespace wxhome
