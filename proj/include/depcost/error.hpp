#pragma once

#include <stdexcept>
#include <string>

namespace depcost {

/// Bad configuration or usage (unknown keys, invalid option values).
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Input data that fails parsing or validation.
class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Numerical failure: non-finite objective, domain violation, singular system.
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace depcost
