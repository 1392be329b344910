#include "cldtrack/metrics.hpp"

#include "cldtrack/losses.hpp"

#include <cmath>
#include <string>

namespace cldt {

namespace {

struct Masked {
  std::vector<double> overlaps;
  std::vector<double> center_err;
  std::vector<double> norm_err;
};

Masked mask_frames(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                   const std::vector<bool>& absent) {
  if (pred.size() != gt.size()) {
    throw DataError("metrics: " + std::to_string(pred.size()) + " predictions vs " +
                    std::to_string(gt.size()) + " ground-truth boxes");
  }
  if (!absent.empty() && absent.size() != gt.size()) {
    throw DataError("metrics: absent mask length does not match the frame count");
  }
  Masked m;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!absent.empty() && absent[i]) continue;
    m.overlaps.push_back(iou(pred[i], gt[i]));
    m.center_err.push_back(center_error(pred[i], gt[i]));
    m.norm_err.push_back(normalized_center_error(pred[i], gt[i]));
  }
  if (m.overlaps.empty()) throw DataError("metrics: every frame is flagged absent");
  return m;
}

}  // namespace

double center_error(const BBox& pred, const BBox& gt) {
  return std::hypot(pred.cx() - gt.cx(), pred.cy() - gt.cy());
}

double normalized_center_error(const BBox& pred, const BBox& gt) {
  if (!gt.positive_extent()) {
    throw DataError("normalized_center_error: ground-truth box has no extent");
  }
  return std::hypot((pred.cx() - gt.cx()) / gt.w, (pred.cy() - gt.cy()) / gt.h);
}

Vector success_thresholds() {
  Vector t(21);
  for (Index i = 0; i < 21; ++i) t(i) = static_cast<double>(i) / 20.0;
  return t;
}

Vector normalized_precision_thresholds() {
  Vector t(21);
  for (Index i = 0; i < 21; ++i) t(i) = static_cast<double>(i) / 40.0;
  return t;
}

Vector success_curve(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                     const std::vector<bool>& absent) {
  const Masked m = mask_frames(pred, gt, absent);
  const Vector thr = success_thresholds();
  Vector curve = Vector::Zero(thr.size());
  for (Index t = 0; t < thr.size(); ++t) {
    Index hits = 0;
    for (const double ov : m.overlaps) {
      if (ov > thr(t)) ++hits;
    }
    curve(t) = static_cast<double>(hits) / static_cast<double>(m.overlaps.size());
  }
  return curve;
}

double success_auc(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                   const std::vector<bool>& absent) {
  return success_curve(pred, gt, absent).mean();
}

double precision_at(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                    const std::vector<bool>& absent, double radius_px) {
  if (!(radius_px >= 0.0)) throw ConfigError("precision_at: radius must be non-negative");
  const Masked m = mask_frames(pred, gt, absent);
  Index hits = 0;
  for (const double err : m.center_err) {
    if (err <= radius_px) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(m.center_err.size());
}

Vector normalized_precision_curve(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                                  const std::vector<bool>& absent) {
  const Masked m = mask_frames(pred, gt, absent);
  const Vector thr = normalized_precision_thresholds();
  Vector curve = Vector::Zero(thr.size());
  for (Index t = 0; t < thr.size(); ++t) {
    Index hits = 0;
    for (const double err : m.norm_err) {
      if (err < thr(t)) ++hits;
    }
    curve(t) = static_cast<double>(hits) / static_cast<double>(m.norm_err.size());
  }
  return curve;
}

double normalized_precision_auc(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                                const std::vector<bool>& absent) {
  return normalized_precision_curve(pred, gt, absent).mean();
}

OverlapStats average_overlap(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                             const std::vector<bool>& absent) {
  const Masked m = mask_frames(pred, gt, absent);
  OverlapStats st;
  Index above50 = 0, above75 = 0;
  for (const double ov : m.overlaps) {
    st.ao += ov;
    if (ov > 0.5) ++above50;
    if (ov > 0.75) ++above75;
  }
  const double n = static_cast<double>(m.overlaps.size());
  st.ao /= n;
  st.sr050 = static_cast<double>(above50) / n;
  st.sr075 = static_cast<double>(above75) / n;
  return st;
}

SequenceMetrics evaluate_sequence(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                                  const std::vector<bool>& absent) {
  const Masked m = mask_frames(pred, gt, absent);  // validates once up front
  SequenceMetrics out;
  out.frames = static_cast<Index>(m.overlaps.size());
  out.s = success_auc(pred, gt, absent);
  out.np = normalized_precision_auc(pred, gt, absent);
  out.p = precision_at(pred, gt, absent);
  const OverlapStats ov = average_overlap(pred, gt, absent);
  out.ao = ov.ao;
  out.sr050 = ov.sr050;
  out.sr075 = ov.sr075;
  return out;
}

}  // namespace cldt
