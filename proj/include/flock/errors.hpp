#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace flock {

/// A filter produced a non-finite value or hit a singular matrix.
class NumericalFault : public std::runtime_error {
 public:
  NumericalFault(std::string filter, const std::string& what)
      : std::runtime_error(filter + ": " + what), filter_(std::move(filter)) {}
  const std::string& filter() const noexcept { return filter_; }

 private:
  std::string filter_;
};

/// Caller violated an operation's documented precondition.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid or incomplete configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Least-squares system was rank deficient.
class FitFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace flock
