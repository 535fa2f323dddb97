#pragma once

#include <stdexcept>
#include <string>

namespace oslow {

inline constexpr const char* kVersion = "0.1.0";

// Thrown when a numeric invariant breaks (non-finite value, guarded log,
// diverging optimization). The CLI maps this to exit code 2.
struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

// Shape/dimension mismatch between tensors or graph nodes.
struct shape_error : std::runtime_error {
  explicit shape_error(const std::string& what) : std::runtime_error(what) {}
};

// Bad configuration, schema violation, unusable argument.
struct config_error : std::runtime_error {
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem / serialization failure. CLI maps this to exit code 1.
struct io_error : std::runtime_error {
  explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace oslow
