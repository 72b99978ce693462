#pragma once

#include <stdexcept>
#include <string>

namespace pctrans {

// Invalid arguments, malformed configs, shape mismatches.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// NaN/Inf losses or gradients, degenerate schedules.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Unreadable, unwritable, truncated or corrupt files.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pctrans
