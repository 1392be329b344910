#pragma once

#include "cldtrack/types.hpp"

#include <vector>

namespace cldt {

/// Center distance in pixels.
double center_error(const BBox& pred, const BBox& gt);

/// Center distance with each axis divided by the ground-truth extent on that
/// axis, making the error resolution independent.
double normalized_center_error(const BBox& pred, const BBox& gt);

/// 21 overlap thresholds 0, 0.05, ..., 1.
Vector success_thresholds();

/// 21 normalized-distance thresholds 0, 0.025, ..., 0.5.
Vector normalized_precision_thresholds();

/// Fraction of evaluated frames whose overlap strictly exceeds each
/// threshold. Frames flagged absent are skipped. A perfect tracker scores 1
/// everywhere except the final threshold, where strict comparison fails.
Vector success_curve(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                     const std::vector<bool>& absent);

/// Mean of the success curve (area under it).
double success_auc(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                   const std::vector<bool>& absent);

/// Fraction of evaluated frames whose center error is at most `radius_px`
/// (inclusive at the boundary).
double precision_at(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                    const std::vector<bool>& absent, double radius_px = 20.0);

/// Fraction of evaluated frames whose normalized center error stays strictly
/// below each threshold.
Vector normalized_precision_curve(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                                  const std::vector<bool>& absent);

/// Mean of the normalized precision curve.
double normalized_precision_auc(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                                const std::vector<bool>& absent);

struct OverlapStats {
  double ao = 0;     // mean overlap
  double sr050 = 0;  // fraction with overlap strictly above 0.5
  double sr075 = 0;
};

OverlapStats average_overlap(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                             const std::vector<bool>& absent);

struct SequenceMetrics {
  Index frames = 0;     // evaluated (present) frames
  double s = 0;         // success AUC
  double np = 0;        // normalized precision AUC
  double p = 0;         // precision at 20 px
  double ao = 0;
  double sr050 = 0;
  double sr075 = 0;
};

/// All of the above in one pass. Throws if the lists disagree in length or no
/// frame is left after masking.
SequenceMetrics evaluate_sequence(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                                  const std::vector<bool>& absent);

}  // namespace cldt
