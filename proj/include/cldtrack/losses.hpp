#pragma once

#include "cldtrack/types.hpp"

namespace cldt {

/// Intersection-over-union of two boxes; degenerate boxes score 0.
double iou(const BBox& a, const BBox& b);

/// Corner representation used by the differentiable box losses.
struct BoxCorners {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  static BoxCorners from_box(const BBox& b) { return {b.x, b.y, b.x2(), b.y2()}; }
  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  bool positive_extent() const { return width() > 0.0 && height() > 0.0; }
};

/// Generalized IoU loss 1 - GIoU, in [0, 2]: 0 for identical boxes, above 1
/// when the boxes are disjoint. Both boxes must have positive extent. If
/// `grad` is given it receives d(loss)/d(pred corners).
double giou_loss(const BoxCorners& pred, const BoxCorners& gt, BoxCorners* grad = nullptr);

/// Mean absolute corner error, gradient optional.
double l1_loss(const BoxCorners& pred, const BoxCorners& gt, BoxCorners* grad = nullptr);

/// Penalty-reduced focal loss over a score map. Cells where the target is
/// exactly 1 count as positives:
///   positives:  -(1 - p)^alpha * log(p)
///   elsewhere:  -(1 - t)^beta * p^alpha * log(1 - p)
/// summed and divided by the positive count. Targets must lie in [0, 1] with
/// at least one exact 1. If `grad` is given it receives d(loss)/d(pred).
double focal_loss(const Vector& pred, const Vector& target, Vector* grad = nullptr,
                  double alpha = 2.0, double beta = 4.0);

/// Unnormalized Gaussian splat centered on one cell, peak exactly 1 there.
/// Flattened row-major to match the score maps.
Vector gaussian_target_map(Index height, Index width, Index row, Index col, double sigma = 1.0);

struct LossWeights {
  double cls = 1.0;
  double iou = 2.0;
  double l1 = 5.0;
};

struct LossBreakdown {
  double total = 0, cls = 0, iou = 0, l1 = 0;
};

}  // namespace cldt
