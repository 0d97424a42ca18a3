#pragma once

#include <stdexcept>
#include <string>

namespace invdes {

inline constexpr const char* kVersion = "invdes-0.1.0";

/// Shape or index mismatch in a tensor operation.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values, rollout divergence, or NaN gradients.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user-supplied configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Axis-aligned box [x_min, y_min, x_max, y_max] in scene units.
struct Box {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  bool contains(double x, double y) const {
    return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
  }
};

}  // namespace invdes
