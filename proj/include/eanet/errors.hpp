#pragma once

#include <stdexcept>
#include <string>

namespace eanet {

/// Malformed or inconsistent input data (annotation files, frame folders,
/// result files, checkpoints). The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or command-line input (unknown keys, bad values).
/// The CLI maps this to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rejection sampling could not find enough qualifying boxes.
class SamplingBudgetExhausted : public std::runtime_error {
 public:
  SamplingBudgetExhausted(std::size_t wanted, std::size_t found, std::size_t attempts)
      : std::runtime_error("sampling budget exhausted: found " + std::to_string(found) + " of " +
                           std::to_string(wanted) + " boxes in " + std::to_string(attempts) +
                           " attempts"),
        found_(found) {}
  std::size_t found() const { return found_; }

 private:
  std::size_t found_;
};

}  // namespace eanet
