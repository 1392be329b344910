// Command-line surface for the tracking pipeline. Five batch commands:
//   build-bag       first-frame description bag -> JSON
//   track           one-pass tracking over a sequence directory
//   eval            metrics from a predictions file
//   demo-synthetic  self-contained train + track + evaluate gate
//   grad-check      analytic vs finite-difference gradient oracle
// Exit codes: 0 ok, 2 usage/config error, 3 data error, 4 gate failure.

#include "cldtrack/config.hpp"
#include "cldtrack/core.hpp"
#include "cldtrack/eval.hpp"
#include "cldtrack/persist.hpp"
#include "cldtrack/random.hpp"
#include "cldtrack/sequence.hpp"
#include "cldtrack/train.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace {

using namespace cldt;
namespace fs = std::filesystem;

BBox parse_box_text(const std::string& text) {
  std::vector<double> vals;
  std::string field;
  std::istringstream in(text);
  while (std::getline(in, field, ',')) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(field, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    while (used < field.size() && std::isspace(static_cast<unsigned char>(field[used]))) ++used;
    if (used == 0 || used != field.size()) {
      throw ConfigError("--box: cannot parse '" + field + "' in \"" + text + "\"");
    }
    vals.push_back(v);
  }
  if (vals.size() != 4) {
    throw ConfigError("--box expects \"x,y,w,h\", got \"" + text + "\"");
  }
  BBox b{vals[0], vals[1], vals[2], vals[3]};
  if (!b.positive_extent()) throw ConfigError("--box needs positive width and height");
  return b;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

std::string format_real(double v, const char* fmt = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

std::string loss_trace_csv(const std::vector<LossBreakdown>& trace) {
  std::string out = "step,total,cls,iou,l1\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    char row[160];
    std::snprintf(row, sizeof(row), "%zu,%.8f,%.8f,%.8f,%.8f\n", i, trace[i].total,
                  trace[i].cls, trace[i].iou, trace[i].l1);
    out += row;
  }
  return out;
}

/// POSTs generate requests to a fixed endpoint; any transport-level problem
/// throws, which the client counts as one failed attempt.
class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(const std::string& url) {
    const std::size_t scheme = url.find("://");
    if (scheme == std::string::npos) {
      throw ConfigError("client.url must look like http://host:port/path, got '" + url + "'");
    }
    const std::size_t slash = url.find('/', scheme + 3);
    base_ = slash == std::string::npos ? url : url.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : url.substr(slash);
  }

  std::string send(const std::string& request_json) override {
    httplib::Client client(base_);
    auto res = client.Post(path_, request_json, "application/json");
    if (!res) throw DataError("service: no response from " + base_);
    if (res->status != 200) {
      throw DataError("service: HTTP " + std::to_string(res->status) + " from " + base_);
    }
    return res->body;
  }

 private:
  std::string base_;
  std::string path_;
};

std::shared_ptr<Transport> make_transport(const RunConfig& cfg) {
  const std::string& mode = cfg.get_text("client.mode");
  if (mode == "mock") {
    return std::make_shared<CannedTransport>(fs::path(cfg.get_text("client.responses_dir")));
  }
  if (mode == "live") {
    const std::string& url = cfg.get_text("client.url");
    if (url.empty()) throw ConfigError("client.mode = live requires client.url");
    return std::make_shared<HttpTransport>(url);
  }
  throw ConfigError("client.mode must be 'mock' or 'live', got '" + mode + "'");
}

Dictionary memory_dictionary(Dictionary::Kind kind, std::vector<std::string> words,
                             const EncoderBackend& backend) {
  Dictionary d;
  d.kind = kind;
  d.entries = std::move(words);
  d.encode(backend);
  return d;
}

/// Minimal bag straight from texts, for the verification commands that do not
/// exercise the full first-frame pipeline.
BagOfDescriptions direct_bag(const EncoderBackend& backend, const ImagePatch& first_frame,
                             const std::vector<std::string>& texts) {
  const Vector image_feat = encode_image(backend, first_frame);
  BagOfDescriptions bag;
  bag.frame_digest = patch_digest_hex(first_frame);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    DescriptionEntry e;
    e.kind = i == 0 ? EntryKind::Class : EntryKind::Attribute;
    e.provenance = Provenance::DictionaryMatch;
    e.text = texts[i];
    e.embedding = encode_text(backend, texts[i]);
    e.sim_to_image = cosine_sim(image_feat, e.embedding);
    bag.entries.push_back(std::move(e));
  }
  return bag;
}

// ---------------------------------------------------------------------------
// build-bag

struct BuildBagArgs {
  std::string frame, box, classes, attributes, lexicon, exclude, out;
};

int cmd_build_bag(const RunConfig& cfg, const BuildBagArgs& a) {
  ImagePatch frame = read_ppm(a.frame);
  frame.target = parse_box_text(a.box);
  validate_patch(frame);

  const StubEncoder backend(cfg.embed_dim(), cfg.encoder_seed());
  const Dictionary classes = Dictionary::load(a.classes, Dictionary::Kind::Class);
  const Dictionary attributes = Dictionary::load(a.attributes, Dictionary::Kind::Attribute);
  Dictionary classes_enc = classes;
  classes_enc.encode(backend);
  Dictionary attributes_enc = attributes;
  attributes_enc.encode(backend);

  std::unique_ptr<Lexicon> lex;
  if (a.lexicon.empty()) {
    lex = std::make_unique<EmptyLexicon>();
  } else {
    lex = std::make_unique<JsonLexicon>(a.lexicon);
  }

  const GenerativeClient client(make_transport(cfg), cfg.client_options());
  BagConfig bc = cfg.bag_config();
  if (!a.exclude.empty()) bc.exclusion_file = a.exclude;

  BagBuildReport report;
  const BagOfDescriptions bag =
      build_bag(frame, classes_enc, attributes_enc, client, *lex, backend, bc, &report);
  save_bag(bag, a.out);

  std::map<EntryKind, int> counts;
  for (const auto& e : bag.entries) counts[e.kind]++;
  for (EntryKind kind : {EntryKind::Class, EntryKind::Attribute, EntryKind::Generated,
                         EntryKind::SemanticContext}) {
    std::cout << to_string(kind) << ": " << counts[kind] << "\n";
  }
  std::cout << "total: " << bag.size() << "\n";
  std::cout << "discarded: " << report.discarded.size() << "\n";
  for (const auto& d : report.discarded) {
    std::cout << "  \"" << d.text << "\" sim " << format_real(d.sim) << "\n";
  }
  std::cout << "regenerated_accepted: " << report.regenerated_accepted << "\n";
  std::cout << "excluded: " << report.excluded << "\n";
  for (const auto& w : report.warnings) std::cout << "warning: " << w << "\n";
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// track

struct TrackArgs {
  std::string sequence, bag, params, out;
};

int cmd_track(const RunConfig& cfg, const TrackArgs& a) {
  const Sequence seq = load_sequence(a.sequence);
  if (seq.size() < 2) throw DataError("track: sequence needs at least two frames");
  const BagOfDescriptions bag = load_bag(a.bag);
  const ParamsFile params = load_params(a.params);

  const auto backend = std::make_shared<StubEncoder>(params.embed_dim, params.encoder_seed);
  TrackerConfig tc = cfg.tracker_config();
  tc.geometry = params.geometry;       // the head was trained at this geometry
  tc.feature_seed = params.feature_seed;

  TrackingSession session(backend, bag, params.adapter, params.head, tc);
  std::vector<BBox> preds;
  preds.reserve(seq.size());
  session.init(seq.load_frame(0), seq.groundtruth[0]);
  preds.push_back(seq.groundtruth[0]);
  for (std::size_t i = 1; i < seq.size(); ++i) {
    try {
      preds.push_back(session.track(seq.load_frame(i)));
    } catch (const std::exception& e) {
      throw DataError("frame " + std::to_string(i) + ": " + e.what());
    }
  }
  save_box_file(preds, a.out);
  std::cout << "tracked " << seq.name << ": " << seq.size() << " frames\n";
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::vector<std::string> sequences, predictions;
  std::string csv, json;
};

int cmd_eval(const RunConfig&, const EvalArgs& a) {
  if (a.sequences.size() != a.predictions.size()) {
    throw ConfigError("eval: " + std::to_string(a.sequences.size()) + " --sequence but " +
                      std::to_string(a.predictions.size()) + " --predictions");
  }
  std::vector<SequenceReport> reports;
  for (std::size_t i = 0; i < a.sequences.size(); ++i) {
    const Sequence seq = load_sequence(a.sequences[i]);
    const std::vector<BBox> preds = load_box_file(a.predictions[i]);
    if (preds.size() != seq.groundtruth.size()) {
      throw DataError("eval: " + seq.name + " has " + std::to_string(seq.groundtruth.size()) +
                      " ground-truth boxes but " + std::to_string(preds.size()) +
                      " predictions");
    }
    reports.push_back(evaluate_predictions(seq.name, preds, seq.groundtruth, seq.absent));
  }
  const std::string csv = metrics_csv(reports);
  std::cout << csv;
  if (!a.csv.empty()) {
    write_text_file(a.csv, csv);
    std::cout << "wrote " << a.csv << "\n";
  }
  if (!a.json.empty()) {
    write_text_file(a.json, metrics_json(reports));
    std::cout << "wrote " << a.json << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// demo-synthetic

struct DemoArgs {
  std::string out_dir = "cldtrack-demo";
  long long frames = 64;
  long long size = 128;
  // Stub encoders give weak image-text similarities, so the demo keeps the
  // whole bag instead of filtering at the production threshold.
  double tau_val = -1.0;
};

int cmd_demo_synthetic(const RunConfig& cfg, const DemoArgs& a) {
  const fs::path out_dir = a.out_dir;
  fs::create_directories(out_dir);

  SyntheticConfig sc;
  sc.frames = static_cast<Index>(a.frames);
  sc.height = static_cast<Index>(a.size);
  sc.width = static_cast<Index>(a.size);
  sc.seed = cfg.master_seed();
  const fs::path seq_dir = out_dir / "sequence";
  write_synthetic_dataset(seq_dir, sc);
  const Sequence seq = load_sequence(seq_dir);

  const auto backend = std::make_shared<StubEncoder>(cfg.embed_dim(), cfg.encoder_seed());

  // First-frame bag over small built-in dictionaries and the mock service.
  ImagePatch first = seq.load_frame(0);
  first.target = seq.groundtruth[0];
  const Dictionary classes = memory_dictionary(
      Dictionary::Kind::Class,
      {"square", "circle", "triangle", "vehicle", "person", "animal"}, *backend);
  const Dictionary attributes = memory_dictionary(
      Dictionary::Kind::Attribute,
      {"bright", "dark", "textured", "smooth", "gliding", "striped", "noisy", "steady"},
      *backend);
  const MapLexicon lex({{"bright", {{"luminous", 0.9}, {"vivid", 0.7}}},
                        {"square", {{"box", 0.85}, {"block", 0.6}}},
                        {"textured", {{"patterned", 0.8}}},
                        {"dark", {{"dim", 0.9}}}});
  const GenerativeClient client(std::make_shared<CannedTransport>(), cfg.client_options());
  BagConfig bc = cfg.bag_config();
  bc.tau_val = a.tau_val;
  BagBuildReport brep;
  const BagOfDescriptions bag =
      build_bag(first, classes, attributes, client, lex, *backend, bc, &brep);
  save_bag(bag, out_dir / "bag.json");

  // Teacher-forced toy training of the head and the token projection.
  Rng adapter_rng(cfg.train_seed());
  AdapterState adapter = AdapterState::init(
      cfg.embed_dim(), static_cast<Index>(cfg.get_int("adapter.context_count")),
      cfg.get_real("adapter.temperature"), adapter_rng);

  // Demo-tuned defaults, applied only where the user stayed silent. The stub
  // encoders pool coarse per-cell statistics; on this scene a coarse grid over
  // a wide search crop keeps the target small relative to the crop, which is
  // what makes its center cell separable from its interior. The longer, hotter
  // schedule is what the free-run needs to survive its own crop feedback.
  SearchGeometry geometry = cfg.geometry();
  if (!cfg.explicitly_set("head.grid")) geometry.grid = 8;
  if (!cfg.explicitly_set("search.area_factor")) geometry.search_area_factor = 16.0;
  geometry.validate();

  std::vector<ImagePatch> frames;
  frames.reserve(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) frames.push_back(seq.load_frame(i));

  const std::vector<TrainSample> samples = build_training_samples(
      *backend, bag, adapter, frames, seq.groundtruth, geometry, cfg.feature_seed(),
      static_cast<Index>(cfg.get_int("ttfum.window_size")));

  Rng head_rng(derive_seed(cfg.train_seed(), "head"));
  const HeadParams head0 = HeadParams::init(cfg.embed_dim(), head_rng);
  TrainConfig train_cfg = cfg.train_config();
  if (!cfg.explicitly_set("train.steps")) train_cfg.steps = 2000;
  if (!cfg.explicitly_set("train.lr")) train_cfg.learning_rate = 0.35;
  train_cfg.validate();
  const TrainResult trained = train_toy(samples, head0, adapter.proj, train_cfg);
  write_text_file(out_dir / "loss_trace.csv", loss_trace_csv(trained.trace));

  adapter.proj = trained.proj;
  ParamsFile pf;
  pf.adapter = adapter;
  pf.head = trained.head;
  pf.geometry = geometry;
  pf.feature_seed = cfg.feature_seed();
  pf.encoder_seed = cfg.encoder_seed();
  pf.embed_dim = cfg.embed_dim();
  save_params(pf, out_dir / "params.json");

  // One-pass evaluation with the trained parameters.
  TrackerConfig tracker_cfg = cfg.tracker_config();
  tracker_cfg.geometry = geometry;
  TrackingSession session(backend, bag, adapter, trained.head, tracker_cfg);
  const SequenceReport report = evaluate_tracker(session, seq);
  save_box_file(report.boxes, out_dir / "predictions.txt");
  write_text_file(out_dir / "metrics.csv", metrics_csv({report}));
  write_text_file(out_dir / "metrics.json", metrics_json({report}));

  const double initial = trained.trace.front().total;
  const double final_loss = trained.trace.back().total;
  std::cout << "frames: " << seq.size() << "\n";
  std::cout << "bag_entries: " << bag.size() << "\n";
  std::cout << "train_steps: " << train_cfg.steps << "\n";
  std::cout << "initial_loss: " << format_real(initial, "%.6f") << "\n";
  std::cout << "final_loss: " << format_real(final_loss, "%.6f") << "\n";
  std::cout << "mean_iou: " << format_real(report.metrics.ao) << "\n";
  std::cout << "success_auc: " << format_real(report.metrics.s) << "\n";
  std::cout << "precision: " << format_real(report.metrics.p) << "\n";
  std::cout << "outputs: " << out_dir.string() << "\n";

  if (train_cfg.steps == 0) {
    std::cout << "gate: skipped (0 training steps)\n";
    return 0;
  }
  const bool iou_ok = report.metrics.ao >= 0.5;
  const bool loss_ok = final_loss < 0.5 * initial;
  if (iou_ok && loss_ok) {
    std::cout << "gate: PASS (mean IoU >= 0.5, final loss < 0.5 x initial)\n";
    return 0;
  }
  std::cout << "gate: FAIL (" << (iou_ok ? "" : "mean IoU below 0.5")
            << (!iou_ok && !loss_ok ? ", " : "")
            << (loss_ok ? "" : "final loss not below 0.5 x initial") << ")\n";
  return 4;
}

// ---------------------------------------------------------------------------
// grad-check

struct GradCheckArgs {
  long long points = 5;
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  bool corrupt = false;  // negative-control hook: breaks one analytic entry
};

int cmd_grad_check(const RunConfig& cfg, const GradCheckArgs& a) {
  if (a.points < 1) throw ConfigError("grad-check: --points must be at least 1");
  if (!(a.epsilon > 0)) throw ConfigError("grad-check: --epsilon must be positive");
  if (!(a.tolerance > 0)) throw ConfigError("grad-check: --tolerance must be positive");

  const LossWeights weights = cfg.train_config().weights;
  // Central differences are only trustworthy away from the loss's piecewise
  // boundaries: ReLU zero crossings, the abs() in the attention path and
  // box-corner ties in the regression terms. Every forward pass reports its
  // distance to the nearest boundary; a candidate point closer than the floor
  // is discarded and the next derived seed is tried. The screen only looks at
  // differentiability, never at gradient agreement, so a broken analytic
  // gradient still fails at whichever point gets accepted.
  const double margin_floor = 10.0 * a.epsilon;
  const long long max_retries = 64;
  double worst = 0;
  for (long long p = 0; p < a.points; ++p) {
    const Index dim = 5 + static_cast<Index>(p % 4);
    SearchGeometry g;
    g.search_size = 32;
    g.exemplar_size = 16;
    g.grid = p % 2 == 0 ? 4 : 8;

    bool accepted = false;
    for (long long r = 0; r < max_retries && !accepted; ++r) {
      const std::uint64_t seed = derive_seed(
          cfg.master_seed(), "grad-" + std::to_string(p) + "-" + std::to_string(r));
      SyntheticConfig sc;
      sc.frames = 64;  // keeps per-frame motion small enough for teacher forcing
      sc.height = 96;
      sc.width = 96;
      sc.seed = seed;
      sc.base_size = 14.0;
      sc.size_amplitude = 2.0;
      const SyntheticSequence scene = make_synthetic(sc);
      const std::vector<ImagePatch> frames(scene.frames.begin(), scene.frames.begin() + 6);
      const std::vector<BBox> boxes(scene.boxes.begin(), scene.boxes.begin() + 6);

      const StubEncoder backend(dim, derive_seed(seed, "encoder"));
      const BagOfDescriptions bag = direct_bag(
          backend, frames.front(),
          {"bright textured square", "dark noise field", "drifting shape", "static corner"});
      Rng adapter_rng(derive_seed(seed, "adapter"));
      const AdapterState adapter = AdapterState::init(dim, 2, 0.07, adapter_rng);

      const std::vector<TrainSample> samples =
          build_training_samples(backend, bag, adapter, frames, boxes, g, seed, 2);

      Rng head_rng(derive_seed(seed, "head"));
      const HeadParams head = HeadParams::init(dim, head_rng);
      const Matrix proj = adapter.proj;

      Gradients grads = Gradients::zero(dim, dim);
      SmoothnessProbe probe;
      batch_loss(samples, head, proj, weights, &grads, &probe);
      if (probe.min() < margin_floor) continue;
      accepted = true;

      Vector analytic = pack_params(grads.head, grads.proj);
      if (a.corrupt && p == 0) analytic(analytic.size() / 2) += 1e-2;

      const auto f = [&](const Vector& flat) {
        HeadParams h = head;
        Matrix pr = proj;
        unpack_params(flat, h, pr);
        return batch_loss(samples, h, pr, weights).total;
      };
      const Vector numeric = finite_diff_grad(f, pack_params(head, proj), a.epsilon);
      const double rel = max_rel_error(analytic, numeric);
      worst = std::max(worst, rel);

      char row[192];
      std::snprintf(row, sizeof(row),
                    "point %lld: dim %lld grid %lld params %lld margin %.3e rel %.3e\n", p,
                    static_cast<long long>(dim), static_cast<long long>(g.grid),
                    static_cast<long long>(analytic.size()), probe.min(), rel);
      std::cout << row;
    }
    if (!accepted) {
      throw DataError("grad-check: point " + std::to_string(p) +
                      " found no evaluation point clear of piecewise boundaries in " +
                      std::to_string(max_retries) + " attempts");
    }
  }

  char summary[128];
  std::snprintf(summary, sizeof(summary), "max rel error %.3e (tolerance %.1e)\n", worst,
                a.tolerance);
  std::cout << summary;
  if (worst > a.tolerance) {
    std::cout << "gradient check FAILED\n";
    return 4;
  }
  std::cout << "gradient check passed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vision-language tracker: description bags, instance-conditioned selection,\n"
               "temporal text updating, correlation tracking and one-pass evaluation."};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_path;
  app.add_option("--config", config_path, "configuration file ([section] headers, key = value)");

  // Every registered key is reachable as a flag; precedence is
  // defaults < --config file < CLDTRACK_* environment < flags.
  std::map<std::string, std::string> flag_store;
  std::vector<std::pair<CLI::Option*, std::string>> flag_bindings;
  for (const KeySpec& s : cfg.specs()) {
    CLI::Option* opt =
        app.add_option(RunConfig::flag_name(s.name), flag_store[s.name],
                       s.doc + " [" + (s.default_value.empty() ? "\"\"" : s.default_value) + "]")
            ->group("Configuration keys");
    flag_bindings.emplace_back(opt, s.name);
  }

  BuildBagArgs bag_args;
  CLI::App* build_bag_cmd =
      app.add_subcommand("build-bag", "build and validate the first-frame description bag");
  build_bag_cmd->fallthrough();
  build_bag_cmd->add_option("--frame", bag_args.frame, "first frame (.ppm)")->required();
  build_bag_cmd->add_option("--box", bag_args.box, "target box \"x,y,w,h\" in frame pixels")
      ->required();
  build_bag_cmd->add_option("--classes", bag_args.classes, "class dictionary, one per line")
      ->required();
  build_bag_cmd
      ->add_option("--attributes", bag_args.attributes, "attribute dictionary, one per line")
      ->required();
  build_bag_cmd->add_option("--lexicon", bag_args.lexicon, "synonym lexicon (JSON)");
  build_bag_cmd->add_option("--exclude", bag_args.exclude, "manual exclusion list, one per line");
  build_bag_cmd->add_option("--out", bag_args.out, "output bag JSON")->required();
  std::string bag_tau;
  CLI::Option* bag_tau_opt =
      build_bag_cmd->add_option("--tau-val", bag_tau, "validation threshold (bag.tau_val) [0.8]");

  TrackArgs track_args;
  CLI::App* track_cmd = app.add_subcommand("track", "one-pass tracking over a sequence");
  track_cmd->fallthrough();
  track_cmd->add_option("--sequence", track_args.sequence, "sequence directory")->required();
  track_cmd->add_option("--bag", track_args.bag, "description bag JSON")->required();
  track_cmd->add_option("--params", track_args.params, "trained parameters JSON")->required();
  track_cmd->add_option("--out", track_args.out, "predictions file, one x,y,w,h per frame")
      ->required();
  std::string track_hanning;
  CLI::Option* track_hanning_opt = track_cmd->add_option(
      "--hanning-weight", track_hanning, "window-penalty mix (inference.hanning_weight) [0.49]");

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "metrics from predictions + ground truth");
  eval_cmd->fallthrough();
  eval_cmd->add_option("--sequence", eval_args.sequences, "sequence directory (repeatable)")
      ->required();
  eval_cmd
      ->add_option("--predictions", eval_args.predictions,
                   "predictions file for the matching --sequence (repeatable)")
      ->required();
  eval_cmd->add_option("--csv", eval_args.csv, "also write the metric table here");
  eval_cmd->add_option("--json", eval_args.json, "also write metrics + curves as JSON here");

  DemoArgs demo_args;
  CLI::App* demo_cmd = app.add_subcommand(
      "demo-synthetic", "generate a synthetic scene, train the toy head, track and evaluate");
  demo_cmd->fallthrough();
  demo_cmd->add_option("--out-dir", demo_args.out_dir, "output directory [cldtrack-demo]");
  demo_cmd->add_option("--frames", demo_args.frames, "sequence length [64]")
      ->check(CLI::PositiveNumber);
  demo_cmd->add_option("--size", demo_args.size, "frame side in pixels [128]")
      ->check(CLI::PositiveNumber);
  demo_cmd->add_option("--tau-val", demo_args.tau_val,
                       "bag validation threshold for the demo [-1: keep all]");
  std::string demo_steps;
  CLI::Option* demo_steps_opt =
      demo_cmd->add_option("--steps", demo_steps, "training steps (train.steps) [demo: 2000]");
  std::string demo_seed;
  CLI::Option* demo_seed_opt =
      demo_cmd->add_option("--seed", demo_seed, "master seed (run.seed) [1234]");

  GradCheckArgs grad_args;
  CLI::App* grad_cmd = app.add_subcommand(
      "grad-check", "compare analytic loss gradients against central finite differences");
  grad_cmd->fallthrough();
  grad_cmd->add_option("--points", grad_args.points, "seeded parameter points [5]");
  grad_cmd->add_option("--epsilon", grad_args.epsilon, "finite-difference step [1e-5]");
  grad_cmd->add_option("--tolerance", grad_args.tolerance, "max relative error allowed [1e-4]");
  grad_cmd->add_flag("--corrupt-gradient", grad_args.corrupt)->group("");
  std::string grad_seed;
  CLI::Option* grad_seed_opt =
      grad_cmd->add_option("--seed", grad_seed, "master seed (run.seed) [1234]");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (!config_path.empty()) cfg.load_file(config_path);
    cfg.apply_env();
    for (const auto& [opt, key] : flag_bindings) {
      if (opt->count() > 0) cfg.set(key, opt->results().back());
    }
    // Command-local shorthands win over the generic spellings.
    if (bag_tau_opt->count() > 0) cfg.set("bag.tau_val", bag_tau);
    if (track_hanning_opt->count() > 0) cfg.set("inference.hanning_weight", track_hanning);
    if (demo_steps_opt->count() > 0) cfg.set("train.steps", demo_steps);
    if (demo_seed_opt->count() > 0) cfg.set("run.seed", demo_seed);
    if (grad_seed_opt->count() > 0) cfg.set("run.seed", grad_seed);

    if (app.got_subcommand(build_bag_cmd)) return cmd_build_bag(cfg, bag_args);
    if (app.got_subcommand(track_cmd)) return cmd_track(cfg, track_args);
    if (app.got_subcommand(eval_cmd)) return cmd_eval(cfg, eval_args);
    if (app.got_subcommand(demo_cmd)) return cmd_demo_synthetic(cfg, demo_args);
    if (app.got_subcommand(grad_cmd)) return cmd_grad_check(cfg, grad_args);
    throw ConfigError("no command selected");
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
