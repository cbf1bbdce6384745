#pragma once

#include <stdexcept>
#include <string>

namespace nidlab {

// Runtime failure: numeric blow-up, missing file, broken invariant.
// The CLI maps this to exit code 2.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad usage or bad configuration. The CLI maps this to exit code 1.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace nidlab
