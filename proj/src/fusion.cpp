#include "cldtrack/fusion.hpp"

#include "cldtrack/core.hpp"
#include "cldtrack/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>

namespace cldt {

namespace {

double stable_sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void require_finite(const Matrix& m, const std::string& what) {
  if (!m.allFinite()) throw DataError(what + ": non-finite values");
}

}  // namespace

void FeatureMap::validate() const {
  if (height < 1 || width < 1) throw DataError("FeatureMap: empty grid");
  if (data.cols() != height * width) {
    throw DataError("FeatureMap: expected " + std::to_string(height * width) +
                    " columns, got " + std::to_string(data.cols()));
  }
  if (data.rows() < 1) throw DataError("FeatureMap: no channels");
  require_finite(data, "FeatureMap");
}

void SearchGeometry::validate() const {
  if (search_size < 2 || exemplar_size < 2) {
    throw ConfigError("SearchGeometry: crop sizes must be at least 2 pixels");
  }
  if (grid < 2) throw ConfigError("SearchGeometry: grid must be at least 2");
  if (search_size % grid != 0) {
    throw ConfigError("SearchGeometry: search_size " + std::to_string(search_size) +
                      " is not divisible by grid " + std::to_string(grid));
  }
  if (!(search_area_factor > 0.0) || !(exemplar_area_factor > 0.0)) {
    throw ConfigError("SearchGeometry: area factors must be positive");
  }
}

FeatureMap extract_features(const EncoderBackend& backend, const ImagePatch& exemplar,
                            const ImagePatch& search, const SearchGeometry& geometry,
                            std::uint64_t feature_seed) {
  geometry.validate();
  validate_patch(exemplar);
  validate_patch(search);
  if (search.height() != geometry.search_size || search.width() != geometry.search_size) {
    throw DataError("extract_features: search patch is " + std::to_string(search.height()) +
                    "x" + std::to_string(search.width()) + ", geometry wants " +
                    std::to_string(geometry.search_size) + " square");
  }
  if (exemplar.height() != geometry.exemplar_size ||
      exemplar.width() != geometry.exemplar_size) {
    throw DataError("extract_features: exemplar patch is " +
                    std::to_string(exemplar.height()) + "x" +
                    std::to_string(exemplar.width()) + ", geometry wants " +
                    std::to_string(geometry.exemplar_size) + " square");
  }

  const Index q = backend.dim();
  const Index g = geometry.grid;
  const Index cell_px = geometry.search_size / g;
  const Vector exemplar_feat = encode_image(backend, exemplar);

  // Exemplar conditioning: stack [cell; exemplar] and project back to q dims
  // with a fixed seeded map, so the same seed always gives the same features.
  Rng rng(derive_seed(feature_seed, "feature_projection"));
  const Matrix proj = gaussian_matrix(q, 2 * q, rng) / std::sqrt(static_cast<double>(2 * q));

  FeatureMap out;
  out.height = g;
  out.width = g;
  out.data.resize(q, g * g);
  Vector stacked(2 * q);
  stacked.tail(q) = exemplar_feat;
  for (Index r = 0; r < g; ++r) {
    for (Index c = 0; c < g; ++c) {
      const BBox cell_box{static_cast<double>(c * cell_px), static_cast<double>(r * cell_px),
                          static_cast<double>(cell_px), static_cast<double>(cell_px)};
      const ImagePatch cell = crop(search, cell_box);
      stacked.head(q) = encode_image(backend, cell);
      out.data.col(FeatureMap::cell_index(r, c, g)) = l2_normalize(proj * stacked);
    }
  }
  return out;
}

FeatureMap correlate(const FeatureMap& features, const Vector& text_kernel) {
  features.validate();
  if (text_kernel.size() != features.channels()) {
    throw DataError("correlate: kernel has " + std::to_string(text_kernel.size()) +
                    " entries for " + std::to_string(features.channels()) + " channels");
  }
  if (!text_kernel.allFinite()) throw DataError("correlate: non-finite kernel");
  FeatureMap out = features;
  out.data.array().colwise() *= (1.0 + text_kernel.array());
  return out;
}

void HeadParams::validate() const {
  const Index c = channels();
  if (c < 1) throw DataError("HeadParams: no channels");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& st = stages[i];
    if (st.weight.rows() != c || st.weight.cols() != c || st.scale.size() != c ||
        st.shift.size() != c) {
      throw DataError("HeadParams: stage " + std::to_string(i) + " shape mismatch");
    }
    require_finite(st.weight, "HeadParams stage weight");
  }
  if (cls_weight.rows() != 1 || cls_weight.cols() != c || cls_bias.size() != 1 ||
      offset_weight.rows() != 2 || offset_weight.cols() != c || offset_bias.size() != 2 ||
      size_weight.rows() != 2 || size_weight.cols() != c || size_bias.size() != 2) {
    throw DataError("HeadParams: output head shape mismatch");
  }
}

HeadParams HeadParams::init(Index channels, Rng& rng) {
  if (channels < 1) throw ConfigError("HeadParams::init: channels must be positive");
  HeadParams p;
  for (auto& st : p.stages) {
    // Near-identity stages keep the signal alive through the ReLU stack at
    // the start of training.
    st.weight = Matrix::Identity(channels, channels) + 0.05 * gaussian_matrix(channels, channels, rng);
    st.scale = Vector::Ones(channels) + 0.05 * gaussian_vector(channels, rng);
    st.shift = 0.05 * gaussian_vector(channels, rng);
  }
  p.cls_weight = 0.1 * gaussian_matrix(1, channels, rng);
  p.cls_bias = Vector::Zero(1);
  p.offset_weight = 0.1 * gaussian_matrix(2, channels, rng);
  p.offset_bias = Vector::Zero(2);
  p.size_weight = 0.1 * gaussian_matrix(2, channels, rng);
  p.size_bias = Vector::Zero(2);
  return p;
}

PredictionMaps predict_maps(const FeatureMap& correlated, const HeadParams& head) {
  correlated.validate();
  head.validate();
  if (head.channels() != correlated.channels()) {
    throw DataError("predict_maps: head expects " + std::to_string(head.channels()) +
                    " channels, features have " + std::to_string(correlated.channels()));
  }

  Matrix h = correlated.data;
  for (const auto& st : head.stages) {
    h = (st.weight * h).eval();
    h.array().colwise() *= st.scale.array();
    h.array().colwise() += st.shift.array();
    h = h.cwiseMax(0.0);
  }

  const Index n = correlated.cells();
  PredictionMaps maps;
  maps.height = correlated.height;
  maps.width = correlated.width;
  maps.cls.resize(n);
  maps.offset.resize(2, n);
  maps.size.resize(2, n);
  const Matrix cls_raw = head.cls_weight * h;
  const Matrix off_raw = head.offset_weight * h;
  const Matrix size_raw = head.size_weight * h;
  for (Index i = 0; i < n; ++i) {
    maps.cls(i) = stable_sigmoid(cls_raw(0, i) + head.cls_bias(0));
    for (Index k = 0; k < 2; ++k) {
      maps.offset(k, i) = stable_sigmoid(off_raw(k, i) + head.offset_bias(k));
      maps.size(k, i) = stable_sigmoid(size_raw(k, i) + head.size_bias(k));
    }
  }
  return maps;
}

namespace {

BBox decode_at(const PredictionMaps& maps, const SearchGeometry& geometry, Index best) {
  const Index row = best / maps.width;
  const Index col = best % maps.width;
  const double stride = geometry.stride();
  const double cx = (static_cast<double>(col) + maps.offset(0, best)) * stride;
  const double cy = (static_cast<double>(row) + maps.offset(1, best)) * stride;
  const double w = maps.size(0, best) * static_cast<double>(geometry.search_size);
  const double h = maps.size(1, best) * static_cast<double>(geometry.search_size);
  return BBox::from_center(cx, cy, w, h);
}

void check_maps(const PredictionMaps& maps, const SearchGeometry& geometry) {
  geometry.validate();
  if (maps.height != geometry.grid || maps.width != geometry.grid) {
    throw DataError("decode_state: maps are " + std::to_string(maps.height) + "x" +
                    std::to_string(maps.width) + ", geometry grid is " +
                    std::to_string(geometry.grid));
  }
  const Index n = maps.height * maps.width;
  if (maps.cls.size() != n || maps.offset.cols() != n || maps.size.cols() != n ||
      maps.offset.rows() != 2 || maps.size.rows() != 2) {
    throw DataError("decode_state: map shapes do not match the grid");
  }
}

}  // namespace

BBox decode_state(const PredictionMaps& maps, const SearchGeometry& geometry) {
  check_maps(maps, geometry);
  return decode_at(maps, geometry, argmax(maps.cls));
}

BBox decode_state(const PredictionMaps& maps, const SearchGeometry& geometry,
                  const Vector& blended_cls) {
  check_maps(maps, geometry);
  if (blended_cls.size() != maps.cls.size()) {
    throw DataError("decode_state: blended scores have " +
                    std::to_string(blended_cls.size()) + " entries for " +
                    std::to_string(maps.cls.size()) + " cells");
  }
  return decode_at(maps, geometry, argmax(blended_cls));
}

Matrix hanning_window(Index height, Index width) {
  if (height < 1 || width < 1) throw ConfigError("hanning_window: empty window");
  const auto axis = [](Index n) {
    Vector v(n);
    if (n == 1) {
      v(0) = 1.0;
      return v;
    }
    for (Index i = 0; i < n; ++i) {
      v(i) = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                   static_cast<double>(n - 1)));
    }
    return v;
  };
  return axis(height) * axis(width).transpose();
}

Matrix apply_window_penalty(const Matrix& scores, const Matrix& window, double w_mix) {
  if (scores.rows() != window.rows() || scores.cols() != window.cols()) {
    throw DataError("apply_window_penalty: score and window shapes differ");
  }
  if (!(w_mix >= 0.0 && w_mix <= 1.0)) {
    throw ConfigError("apply_window_penalty: mix weight must lie in [0, 1]");
  }
  if (w_mix == 0.0) return scores;
  if (w_mix == 1.0) return window;
  return (1.0 - w_mix) * scores + w_mix * window;
}

Matrix map_to_matrix(const Vector& flat, Index height, Index width) {
  if (height < 1 || width < 1 || flat.size() != height * width) {
    throw DataError("map_to_matrix: cannot reshape " + std::to_string(flat.size()) +
                    " values to " + std::to_string(height) + "x" + std::to_string(width));
  }
  Matrix m(height, width);
  for (Index r = 0; r < height; ++r) {
    for (Index c = 0; c < width; ++c) m(r, c) = flat(r * width + c);
  }
  return m;
}

Vector matrix_to_map(const Matrix& m) {
  if (m.size() == 0) throw DataError("matrix_to_map: empty matrix");
  Vector v(m.size());
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) v(r * m.cols() + c) = m(r, c);
  }
  return v;
}

void TrackerConfig::validate() const {
  geometry.validate();
  if (!(hanning_weight >= 0.0 && hanning_weight <= 1.0)) {
    throw ConfigError("TrackerConfig: hanning_weight must lie in [0, 1]");
  }
  if (window_size < 1) throw ConfigError("TrackerConfig: window_size must be positive");
  if (update_interval < 1) throw ConfigError("TrackerConfig: update_interval must be positive");
  if (!(weighted_decay > 0.0) || !std::isfinite(weighted_decay)) {
    throw ConfigError("TrackerConfig: weighted_decay must be positive and finite");
  }
}

TrackingSession::TrackingSession(std::shared_ptr<const EncoderBackend> backend,
                                 BagOfDescriptions bag, AdapterState adapter, HeadParams head,
                                 TrackerConfig cfg)
    : backend_(std::move(backend)),
      bag_(std::move(bag)),
      adapter_(std::move(adapter)),
      head_(std::move(head)),
      cfg_(std::move(cfg)),
      window_(cfg_.window_size, cfg_.update_interval) {
  if (!backend_) throw ConfigError("TrackingSession: null encoder backend");
  cfg_.validate();
  adapter_.validate();
  head_.validate();
  if (bag_.entries.empty()) throw DataError("TrackingSession: empty description bag");
  for (const auto& e : bag_.entries) {
    if (e.embedding.size() != backend_->dim()) {
      throw DataError("TrackingSession: bag embeddings do not match the encoder dimension");
    }
  }
  if (adapter_.dim() != backend_->dim()) {
    throw DataError("TrackingSession: adapter dimension does not match the encoder");
  }
  if (head_.channels() != backend_->dim()) {
    throw DataError("TrackingSession: head channels do not match the encoder dimension");
  }
  hanning_ = hanning_window(cfg_.geometry.grid, cfg_.geometry.grid);
}

ImagePatch square_context_crop(const ImagePatch& frame, const BBox& box, double area_factor,
                               Index out_size, double* scale, double* x0, double* y0) {
  if (!box.positive_extent()) throw DataError("square_context_crop: degenerate box");
  if (!(area_factor > 0.0)) throw ConfigError("square_context_crop: area factor must be positive");
  if (out_size < 2) throw ConfigError("square_context_crop: output size must be at least 2");
  const double side = std::sqrt(area_factor * box.w * box.h);
  const long long side_px = std::max<long long>(2, std::llround(side));
  const long long frame_side = std::max(frame.width(), frame.height());
  if (side_px > 16 * frame_side) {
    throw DataError("square_context_crop: requested crop side " + std::to_string(side_px) +
                    " is out of all proportion to the " + std::to_string(frame.width()) + "x" +
                    std::to_string(frame.height()) + " frame");
  }
  const long long left = std::llround(box.cx() - static_cast<double>(side_px) / 2.0);
  const long long top = std::llround(box.cy() - static_cast<double>(side_px) / 2.0);
  const BBox crop_box{static_cast<double>(left), static_cast<double>(top),
                      static_cast<double>(side_px), static_cast<double>(side_px)};
  const ImagePatch cropped = crop(frame, crop_box);
  ImagePatch resized = resize_bilinear(cropped, out_size, out_size);
  if (scale) *scale = static_cast<double>(side_px) / static_cast<double>(out_size);
  if (x0) *x0 = static_cast<double>(left);
  if (y0) *y0 = static_cast<double>(top);
  return resized;
}

void TrackingSession::init(const ImagePatch& frame, const BBox& target) {
  validate_patch(frame);
  if (!target.positive_extent()) throw DataError("TrackingSession::init: degenerate target box");
  if (target.cx() < 0.0 || target.cx() > static_cast<double>(frame.width()) ||
      target.cy() < 0.0 || target.cy() > static_cast<double>(frame.height())) {
    throw DataError("TrackingSession::init: target center lies outside the frame");
  }

  exemplar_ = square_context_crop(frame, target, cfg_.geometry.exemplar_area_factor,
                          cfg_.geometry.exemplar_size, nullptr, nullptr, nullptr);
  const Vector exemplar_feat = encode_image(*backend_, exemplar_);
  const SelectedDescription sel = select_description(exemplar_feat, bag_, adapter_);
  exemplar_token_ = sel.projected;
  exemplar_token_raw_ = sel.raw;

  window_ = TemporalTextWindow(cfg_.window_size, cfg_.update_interval);
  current_ = target;
  initialized_ = true;
}

BBox TrackingSession::track(const ImagePatch& frame) {
  if (!initialized_) throw DataError("TrackingSession::track: init was never called");
  validate_patch(frame);

  double scale = 1.0, x0 = 0.0, y0 = 0.0;
  const ImagePatch search = square_context_crop(frame, current_, cfg_.geometry.search_area_factor,
                                        cfg_.geometry.search_size, &scale, &x0, &y0);

  // Text side: select the best description for the current search crop, fold
  // it into the temporal window, and reweight the exemplar token.
  const Vector search_feat = encode_image(*backend_, search);
  const SelectedDescription sel = select_description(search_feat, bag_, adapter_);
  window_.push(sel.projected);
  AggregationStrategy strategy = cfg_.strategy;
  if (strategy.mode == Aggregation::Weighted && strategy.weights.size() == 0) {
    strategy.weights =
        AggregationStrategy::decay_weights(window_.size(), cfg_.weighted_decay);
  }
  const Vector att = update(exemplar_token_, window_, strategy);
  const Vector text_kernel = apply_attention(att, exemplar_token_);

  // Visual side: per-cell features modulated by the text kernel, then the
  // prediction head and the window-penalized argmax decode.
  const FeatureMap features =
      extract_features(*backend_, exemplar_, search, cfg_.geometry, cfg_.feature_seed);
  const FeatureMap corr = correlate(features, text_kernel);
  const PredictionMaps maps = predict_maps(corr, head_);
  const Matrix cls_grid = map_to_matrix(maps.cls, maps.height, maps.width);
  const Matrix blended = apply_window_penalty(cls_grid, hanning_, cfg_.hanning_weight);
  const BBox in_crop = decode_state(maps, cfg_.geometry, matrix_to_map(blended));

  // Back to frame pixels; keep the center inside the frame and the extent no
  // larger than the frame, so the next search crop cannot run away (an
  // oversized size estimate would otherwise grow the crop, and with it the
  // next estimate, without bound).
  const double w = std::clamp(in_crop.w * scale, 2.0, static_cast<double>(frame.width()));
  const double h = std::clamp(in_crop.h * scale, 2.0, static_cast<double>(frame.height()));
  const double cx = std::clamp(x0 + in_crop.cx() * scale, 0.0, static_cast<double>(frame.width()));
  const double cy = std::clamp(y0 + in_crop.cy() * scale, 0.0, static_cast<double>(frame.height()));
  current_ = BBox::from_center(cx, cy, w, h);
  return current_;
}

BBox track_frame(TrackingSession& session, const ImagePatch& frame) {
  return session.track(frame);
}

}  // namespace cldt
