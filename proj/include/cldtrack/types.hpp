#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace cldt {

using Scalar = double;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Configuration or usage mistakes: unknown keys, malformed flag values,
/// missing input files. Mapped to exit code 2 by the CLI.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent data: parse failures, dimension mismatches,
/// degenerate numeric inputs. Mapped to exit code 3 by the CLI.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Axis-aligned box, top-left origin, pixel units, (x, y, w, h).
struct BBox {
  double x = 0;
  double y = 0;
  double w = 0;
  double h = 0;

  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
  double x2() const { return x + w; }
  double y2() const { return y + h; }
  double area() const { return w * h; }
  bool positive_extent() const { return w > 0.0 && h > 0.0; }

  static BBox from_center(double cx, double cy, double w, double h) {
    return BBox{cx - 0.5 * w, cy - 0.5 * h, w, h};
  }
};

inline bool operator==(const BBox& a, const BBox& b) {
  return a.x == b.x && a.y == b.y && a.w == b.w && a.h == b.h;
}
inline bool operator!=(const BBox& a, const BBox& b) { return !(a == b); }

}  // namespace cldt
