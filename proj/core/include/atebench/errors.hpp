#pragma once

#include <stdexcept>
#include <string>

namespace atebench {

// Invalid user-supplied input: bad dimensions, malformed files, out-of-range
// options.  The CLI maps this to exit code 2.
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// A numerical procedure could not produce a usable result: MLE nonexistence,
// degenerate propensities, solver breakdown.  The CLI maps this to exit code
// 3; the Monte Carlo harness records it as a failed replication.
class numerical_error : public std::runtime_error {
 public:
  explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace atebench
