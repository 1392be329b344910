#include "cldtrack/eval.hpp"

#include <json.hpp>

#include <cstdio>

namespace cldt {

std::vector<BBox> run_ope(TrackingSession& session, const Sequence& seq) {
  if (seq.size() < 2) throw DataError("run_ope: sequence needs at least two frames");
  std::vector<BBox> preds;
  preds.reserve(seq.size());
  session.init(seq.load_frame(0), seq.groundtruth[0]);
  preds.push_back(seq.groundtruth[0]);
  for (std::size_t i = 1; i < seq.size(); ++i) {
    preds.push_back(session.track(seq.load_frame(i)));
  }
  return preds;
}

SequenceReport evaluate_predictions(const std::string& name, const std::vector<BBox>& pred,
                                    const std::vector<BBox>& gt,
                                    const std::vector<bool>& absent) {
  SequenceReport report;
  report.name = name;
  report.boxes = pred;
  report.metrics = evaluate_sequence(pred, gt, absent);
  report.success_curve = cldt::success_curve(pred, gt, absent);
  report.normalized_precision_curve = cldt::normalized_precision_curve(pred, gt, absent);
  return report;
}

SequenceReport evaluate_tracker(TrackingSession& session, const Sequence& seq) {
  const std::vector<BBox> boxes = run_ope(session, seq);
  return evaluate_predictions(seq.name, boxes, seq.groundtruth, seq.absent);
}

namespace {

SequenceMetrics summarize(const std::vector<SequenceReport>& reports) {
  SequenceMetrics all;
  for (const auto& r : reports) {
    all.frames += r.metrics.frames;
    all.s += r.metrics.s;
    all.np += r.metrics.np;
    all.p += r.metrics.p;
    all.ao += r.metrics.ao;
    all.sr050 += r.metrics.sr050;
    all.sr075 += r.metrics.sr075;
  }
  const double n = static_cast<double>(reports.size());
  all.s /= n;
  all.np /= n;
  all.p /= n;
  all.ao /= n;
  all.sr050 /= n;
  all.sr075 /= n;
  return all;
}

std::string csv_row(const std::string& name, const SequenceMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%lld,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f\n", name.c_str(),
                static_cast<long long>(m.frames), m.s, m.np, m.p, m.ao, m.sr050, m.sr075);
  return buf;
}

}  // namespace

std::string metrics_csv(const std::vector<SequenceReport>& reports) {
  if (reports.empty()) throw DataError("metrics_csv: no sequence reports");
  std::string out = "sequence,frames,S,NP,P,AO,SR_050,SR_075\n";
  for (const auto& r : reports) out += csv_row(r.name, r.metrics);
  out += csv_row("ALL", summarize(reports));
  return out;
}

std::string metrics_json(const std::vector<SequenceReport>& reports) {
  if (reports.empty()) throw DataError("metrics_json: no sequence reports");
  nlohmann::json doc;
  const auto metrics_obj = [](const SequenceMetrics& m) {
    return nlohmann::json{{"frames", m.frames}, {"S", m.s},         {"NP", m.np},
                          {"P", m.p},           {"AO", m.ao},       {"SR_050", m.sr050},
                          {"SR_075", m.sr075}};
  };
  doc["sequences"] = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json entry;
    entry["name"] = r.name;
    entry["metrics"] = metrics_obj(r.metrics);
    entry["success_curve"] = std::vector<double>(
        r.success_curve.data(), r.success_curve.data() + r.success_curve.size());
    entry["normalized_precision_curve"] = std::vector<double>(
        r.normalized_precision_curve.data(),
        r.normalized_precision_curve.data() + r.normalized_precision_curve.size());
    doc["sequences"].push_back(std::move(entry));
  }
  doc["all"] = metrics_obj(summarize(reports));
  return doc.dump(2) + "\n";
}

}  // namespace cldt
