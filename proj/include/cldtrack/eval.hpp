#pragma once

#include "cldtrack/fusion.hpp"
#include "cldtrack/metrics.hpp"
#include "cldtrack/sequence.hpp"

#include <string>
#include <vector>

namespace cldt {

/// One-pass protocol: the session locks on at the first frame's ground truth
/// (recorded verbatim as the first prediction) and tracks the rest without
/// reinitialization.
std::vector<BBox> run_ope(TrackingSession& session, const Sequence& seq);

struct SequenceReport {
  std::string name;
  SequenceMetrics metrics;
  Vector success_curve;              // 21 values
  Vector normalized_precision_curve; // 21 values
  std::vector<BBox> boxes;           // predictions, one per frame
};

SequenceReport evaluate_tracker(TrackingSession& session, const Sequence& seq);

/// Report from predictions computed elsewhere (e.g. a predictions file).
SequenceReport evaluate_predictions(const std::string& name, const std::vector<BBox>& pred,
                                    const std::vector<BBox>& gt,
                                    const std::vector<bool>& absent);

/// "sequence,frames,S,NP,P,AO,SR_050,SR_075" rows, four decimals, plus a
/// final ALL row: frames summed, metrics averaged over sequences unweighted.
std::string metrics_csv(const std::vector<SequenceReport>& reports);

/// The same report as JSON, with the full per-sequence curves included.
std::string metrics_json(const std::vector<SequenceReport>& reports);

}  // namespace cldt
