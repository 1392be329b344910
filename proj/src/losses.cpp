#include "cldtrack/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cldt {

double iou(const BBox& a, const BBox& b) {
  if (!a.positive_extent() || !b.positive_extent()) return 0.0;
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x, b.x);
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

double giou_loss(const BoxCorners& pred, const BoxCorners& gt, BoxCorners* grad) {
  if (!pred.positive_extent() || !gt.positive_extent()) {
    throw DataError("giou_loss: boxes must have positive extent");
  }

  // Selector flags record which operand each min/max picked, so the gradient
  // flows along the same branch the value came from.
  const bool ix1_pred = pred.x1 > gt.x1;  // intersection left edge
  const bool iy1_pred = pred.y1 > gt.y1;
  const bool ix2_pred = pred.x2 < gt.x2;  // intersection right edge
  const bool iy2_pred = pred.y2 < gt.y2;
  const double ix1 = ix1_pred ? pred.x1 : gt.x1;
  const double iy1 = iy1_pred ? pred.y1 : gt.y1;
  const double ix2 = ix2_pred ? pred.x2 : gt.x2;
  const double iy2 = iy2_pred ? pred.y2 : gt.y2;
  const double iw = std::max(0.0, ix2 - ix1);
  const double ih = std::max(0.0, iy2 - iy1);
  const double inter = iw * ih;

  const double area_p = pred.width() * pred.height();
  const double area_g = gt.width() * gt.height();
  const double uni = area_p + area_g - inter;

  const bool hx1_pred = pred.x1 < gt.x1;  // hull edges pick the other branch
  const bool hy1_pred = pred.y1 < gt.y1;
  const bool hx2_pred = pred.x2 > gt.x2;
  const bool hy2_pred = pred.y2 > gt.y2;
  const double cw = (hx2_pred ? pred.x2 : gt.x2) - (hx1_pred ? pred.x1 : gt.x1);
  const double ch = (hy2_pred ? pred.y2 : gt.y2) - (hy1_pred ? pred.y1 : gt.y1);
  const double hull = cw * ch;

  const double iou_v = inter / uni;
  const double giou = iou_v - (hull - uni) / hull;
  const double loss = 1.0 - giou;

  if (grad) {
    // d(area_p)/d corners
    const double dap_x1 = -pred.height(), dap_x2 = pred.height();
    const double dap_y1 = -pred.width(), dap_y2 = pred.width();

    // d(inter)/d corners through the selected edges (zero when clamped away)
    double din_x1 = 0, din_y1 = 0, din_x2 = 0, din_y2 = 0;
    if (iw > 0.0 && ih > 0.0) {
      if (ix1_pred) din_x1 = -ih;
      if (ix2_pred) din_x2 = ih;
      if (iy1_pred) din_y1 = -iw;
      if (iy2_pred) din_y2 = iw;
    }

    // d(hull)/d corners
    double dh_x1 = 0, dh_y1 = 0, dh_x2 = 0, dh_y2 = 0;
    if (hx1_pred) dh_x1 = -ch;
    if (hx2_pred) dh_x2 = ch;
    if (hy1_pred) dh_y1 = -cw;
    if (hy2_pred) dh_y2 = cw;

    const auto corner = [&](double dap, double din, double dh) {
      const double duni = dap - din;
      const double diou = (din * uni - inter * duni) / (uni * uni);
      // giou = iou - 1 + uni / hull
      const double dgiou = diou + duni / hull - uni * dh / (hull * hull);
      return -dgiou;
    };
    grad->x1 = corner(dap_x1, din_x1, dh_x1);
    grad->y1 = corner(dap_y1, din_y1, dh_y1);
    grad->x2 = corner(dap_x2, din_x2, dh_x2);
    grad->y2 = corner(dap_y2, din_y2, dh_y2);
  }
  return loss;
}

double l1_loss(const BoxCorners& pred, const BoxCorners& gt, BoxCorners* grad) {
  const double dx1 = pred.x1 - gt.x1;
  const double dy1 = pred.y1 - gt.y1;
  const double dx2 = pred.x2 - gt.x2;
  const double dy2 = pred.y2 - gt.y2;
  if (grad) {
    const auto sgn = [](double v) { return v > 0.0 ? 0.25 : (v < 0.0 ? -0.25 : 0.0); };
    grad->x1 = sgn(dx1);
    grad->y1 = sgn(dy1);
    grad->x2 = sgn(dx2);
    grad->y2 = sgn(dy2);
  }
  return (std::abs(dx1) + std::abs(dy1) + std::abs(dx2) + std::abs(dy2)) / 4.0;
}

double focal_loss(const Vector& pred, const Vector& target, Vector* grad, double alpha,
                  double beta) {
  if (pred.size() != target.size() || pred.size() == 0) {
    throw DataError("focal_loss: prediction and target sizes differ");
  }
  constexpr double kLogGuard = 1e-12;
  Index n_pos = 0;
  for (Index i = 0; i < target.size(); ++i) {
    const double t = target(i);
    if (!(t >= 0.0 && t <= 1.0)) throw DataError("focal_loss: targets must lie in [0, 1]");
    const double p = pred(i);
    if (!(p >= 0.0 && p <= 1.0)) throw DataError("focal_loss: predictions must lie in [0, 1]");
    if (t == 1.0) ++n_pos;
  }
  if (n_pos == 0) throw DataError("focal_loss: target map has no positive cell");

  if (grad) *grad = Vector::Zero(pred.size());
  double sum = 0.0;
  for (Index i = 0; i < pred.size(); ++i) {
    const double p = pred(i);
    const double t = target(i);
    if (t == 1.0) {
      const double q = 1.0 - p;
      sum -= std::pow(q, alpha) * std::log(std::max(p, kLogGuard));
      if (grad) {
        (*grad)(i) = (alpha * std::pow(q, alpha - 1.0) * std::log(std::max(p, kLogGuard)) -
                      std::pow(q, alpha) / std::max(p, kLogGuard)) /
                     static_cast<double>(n_pos);
      }
    } else {
      const double damp = std::pow(1.0 - t, beta);
      sum -= damp * std::pow(p, alpha) * std::log(std::max(1.0 - p, kLogGuard));
      if (grad) {
        (*grad)(i) = -damp *
                     (alpha * std::pow(p, alpha - 1.0) * std::log(std::max(1.0 - p, kLogGuard)) -
                      std::pow(p, alpha) / std::max(1.0 - p, kLogGuard)) /
                     static_cast<double>(n_pos);
      }
    }
  }
  return sum / static_cast<double>(n_pos);
}

Vector gaussian_target_map(Index height, Index width, Index row, Index col, double sigma) {
  if (height < 1 || width < 1) throw DataError("gaussian_target_map: empty grid");
  if (row < 0 || row >= height || col < 0 || col >= width) {
    throw DataError("gaussian_target_map: center cell (" + std::to_string(row) + ", " +
                    std::to_string(col) + ") outside " + std::to_string(height) + "x" +
                    std::to_string(width));
  }
  if (!(sigma > 0.0)) throw ConfigError("gaussian_target_map: sigma must be positive");
  Vector out(height * width);
  for (Index r = 0; r < height; ++r) {
    for (Index c = 0; c < width; ++c) {
      const double dr = static_cast<double>(r - row);
      const double dc = static_cast<double>(c - col);
      out(r * width + c) = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
    }
  }
  return out;
}

}  // namespace cldt
