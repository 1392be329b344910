#pragma once

#include "cldtrack/adapter.hpp"
#include "cldtrack/bag.hpp"
#include "cldtrack/encoders.hpp"
#include "cldtrack/image.hpp"
#include "cldtrack/ttfum.hpp"
#include "cldtrack/types.hpp"

#include <array>
#include <memory>

namespace cldt {

/// Dense feature grid over the search crop. Cells are stored as columns in
/// row-major order: column index = row * width + col.
struct FeatureMap {
  Matrix data;  // channels x (height * width)
  Index height = 0;
  Index width = 0;

  Index channels() const { return data.rows(); }
  Index cells() const { return height * width; }
  static Index cell_index(Index row, Index col, Index width) { return row * width + col; }
  void validate() const;
};

/// Crop and grid geometry shared by feature extraction and decoding.
struct SearchGeometry {
  Index search_size = 384;
  Index exemplar_size = 192;
  double search_area_factor = 4.0;    // crop area relative to the target box
  double exemplar_area_factor = 2.0;
  Index grid = 16;                    // score-map cells per side

  double stride() const {
    return static_cast<double>(search_size) / static_cast<double>(grid);
  }
  void validate() const;
};

/// Per-cell appearance features for the search crop, conditioned on the
/// exemplar: each cell embedding is stacked with the exemplar embedding,
/// pushed through a seeded random projection and renormalized. Both patches
/// must already be resized to their geometry sizes.
FeatureMap extract_features(const EncoderBackend& backend, const ImagePatch& exemplar,
                            const ImagePatch& search, const SearchGeometry& geometry,
                            std::uint64_t feature_seed);

/// Per-channel text modulation: row c of the output is (1 + kernel[c]) times
/// row c of the features, a 1x1 depthwise correlation.
FeatureMap correlate(const FeatureMap& features, const Vector& text_kernel);

/// One 1x1 conv stage with per-channel affine normalization and ReLU.
struct HeadStage {
  Matrix weight;  // channels x channels
  Vector scale;   // channels
  Vector shift;   // channels
};

/// Four stacked conv stages feeding three sigmoid heads: one classification
/// score, two center offsets and two normalized extents per cell.
struct HeadParams {
  std::array<HeadStage, 4> stages;
  Matrix cls_weight;     // 1 x channels
  Vector cls_bias;       // 1
  Matrix offset_weight;  // 2 x channels
  Vector offset_bias;    // 2
  Matrix size_weight;    // 2 x channels
  Vector size_bias;      // 2

  Index channels() const { return stages[0].weight.rows(); }
  void validate() const;
  static HeadParams init(Index channels, Rng& rng);
};

struct PredictionMaps {
  Vector cls;     // cells; values in (0, 1)
  Matrix offset;  // 2 x cells; sub-cell center offsets in (0, 1)
  Matrix size;    // 2 x cells; extents normalized by the search size
  Index height = 0;
  Index width = 0;
};

PredictionMaps predict_maps(const FeatureMap& correlated, const HeadParams& head);

/// Box in search-crop pixels decoded at the best-scoring cell: the center is
/// (col + offset_x, row + offset_y) times the stride, the extent is the size
/// output times the crop side.
BBox decode_state(const PredictionMaps& maps, const SearchGeometry& geometry);

/// Same decode, but the argmax cell comes from an externally blended score
/// map (e.g. after the window penalty).
BBox decode_state(const PredictionMaps& maps, const SearchGeometry& geometry,
                  const Vector& blended_cls);

/// Separable raised-cosine window, peak 1 at the center. A single-sample axis
/// degenerates to 1.
Matrix hanning_window(Index height, Index width);

/// score * (1 - w) + window * w, elementwise. w = 0 and w = 1 return the
/// inputs bit for bit.
Matrix apply_window_penalty(const Matrix& scores, const Matrix& window, double w_mix);

Matrix map_to_matrix(const Vector& flat, Index height, Index width);
Vector matrix_to_map(const Matrix& m);

/// Square crop with `area_factor` times the box area, centered on the box and
/// resized to `out_size`. Optionally reports the scale (crop pixels per output
/// pixel) and the crop origin in frame coordinates, which together map crop
/// boxes back to the frame.
ImagePatch square_context_crop(const ImagePatch& frame, const BBox& box, double area_factor,
                               Index out_size, double* scale = nullptr, double* x0 = nullptr,
                               double* y0 = nullptr);

struct TrackerConfig {
  SearchGeometry geometry;
  double hanning_weight = 0.49;
  Index window_size = 5;
  Index update_interval = 1;
  AggregationStrategy strategy = AggregationStrategy::average();
  // Weighted strategies with no explicit weight vector get exponential decay
  // weights sized to the live window each frame, using this per-step factor.
  double weighted_decay = 0.5;
  std::uint64_t feature_seed = 0;

  void validate() const;
};

/// Frame-by-frame tracking state: the exemplar crop and its selected text
/// token, the temporal text window, and the previous box driving the next
/// search crop.
class TrackingSession {
 public:
  TrackingSession(std::shared_ptr<const EncoderBackend> backend, BagOfDescriptions bag,
                  AdapterState adapter, HeadParams head, TrackerConfig cfg);

  /// Locks onto the target in the first frame.
  void init(const ImagePatch& frame, const BBox& target);

  /// Tracks one subsequent frame; returns the new box in frame pixels.
  BBox track(const ImagePatch& frame);

  bool initialized() const { return initialized_; }
  const BBox& current() const { return current_; }
  const TrackerConfig& config() const { return cfg_; }
  const BagOfDescriptions& bag() const { return bag_; }
  const AdapterState& adapter() const { return adapter_; }
  const HeadParams& head() const { return head_; }
  const TemporalTextWindow& window() const { return window_; }
  const Vector& exemplar_token() const { return exemplar_token_; }
  const Vector& exemplar_token_raw() const { return exemplar_token_raw_; }

 private:
  std::shared_ptr<const EncoderBackend> backend_;
  BagOfDescriptions bag_;
  AdapterState adapter_;
  HeadParams head_;
  TrackerConfig cfg_;
  TemporalTextWindow window_;
  Matrix hanning_;
  ImagePatch exemplar_;
  Vector exemplar_token_;      // projected probability token
  Vector exemplar_token_raw_;  // raw selected bag embedding
  BBox current_;
  bool initialized_ = false;
};

/// Free-function counterpart of TrackingSession::track.
BBox track_frame(TrackingSession& session, const ImagePatch& frame);

}  // namespace cldt
