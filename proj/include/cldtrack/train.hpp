#pragma once

#include "cldtrack/adapter.hpp"
#include "cldtrack/bag.hpp"
#include "cldtrack/encoders.hpp"
#include "cldtrack/fusion.hpp"
#include "cldtrack/losses.hpp"
#include "cldtrack/types.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <vector>

namespace cldt {

/// One supervised frame. Everything upstream of the trainable parameters is
/// frozen into the sample: the search features and which bag entries the hard
/// argmax selected (their raw embeddings).
struct TrainSample {
  FeatureMap features;              // search-crop features
  Vector exemplar_raw;              // selected exemplar embedding
  std::vector<Vector> history_raw;  // selected search embeddings, oldest first
  Index gt_row = 0;                 // positive cell in the score grid
  Index gt_col = 0;
  BoxCorners gt_box;                // normalized to the search crop, inside [0, 1]

  void validate(Index channels, Index grid) const;
};

/// Teacher-forced samples along a ground-truth sequence: frame 0 provides the
/// exemplar, every later frame becomes one sample whose search crop is
/// centered on the previous ground-truth box. Token selection runs the frozen
/// adapter; the rolling history keeps at most `window_size` tokens.
std::vector<TrainSample> build_training_samples(
    const EncoderBackend& backend, const BagOfDescriptions& bag, const AdapterState& adapter,
    const std::vector<ImagePatch>& frames, const std::vector<BBox>& gt_boxes,
    const SearchGeometry& geometry, std::uint64_t feature_seed, Index window_size);

/// Gradients of the trainable parameters: the full prediction head plus the
/// token projection. The selection parameters (context rows, meta-net,
/// temperature) only act through the hard argmax, which is locally constant,
/// so their gradient is exactly zero and they are not represented here.
struct Gradients {
  HeadParams head;
  Matrix proj;

  static Gradients zero(Index channels, Index dim);
};

/// Distances to the nearest piecewise-linear boundaries met during the loss
/// forward pass, the places where finite differences stop being trustworthy:
/// ReLU pre-activations, the attention |exemplar - history| input, and the
/// predicted-vs-target corner gaps (L1 sign and overlap selector switches).
/// A central-difference stencil of step epsilon is reliable only when min()
/// comfortably exceeds epsilon times the local slopes (order one here).
struct SmoothnessProbe {
  double min_pre_relu = std::numeric_limits<double>::infinity();
  double min_attention_delta = std::numeric_limits<double>::infinity();
  double min_corner_gap = std::numeric_limits<double>::infinity();

  double min() const {
    return std::min({min_pre_relu, min_attention_delta, min_corner_gap});
  }
};

/// Loss of one sample under the current parameters. The classification target
/// is a Gaussian splat peaking at the positive cell; the box losses read the
/// offset/size heads at that same cell. Pass `grads` to accumulate (+=) the
/// analytic gradients, and `probe` to min-fold the kink distances.
LossBreakdown sample_loss(const TrainSample& sample, const HeadParams& head, const Matrix& proj,
                          const LossWeights& weights, Gradients* grads = nullptr,
                          SmoothnessProbe* probe = nullptr);

/// Mean loss (and mean gradients) over a batch; the probe folds across it.
LossBreakdown batch_loss(const std::vector<TrainSample>& samples, const HeadParams& head,
                         const Matrix& proj, const LossWeights& weights,
                         Gradients* grads = nullptr, SmoothnessProbe* probe = nullptr);

/// Flat view of the trainable parameters, fixed order: the four stages
/// (weight row-major, scale, shift), the three output heads (weight, bias),
/// then the projection row-major.
Index param_count(Index channels, Index dim);
Vector pack_params(const HeadParams& head, const Matrix& proj);
void unpack_params(const Vector& flat, HeadParams& head, Matrix& proj);

/// Central finite differences of f around `at`.
Vector finite_diff_grad(const std::function<double(const Vector&)>& f, const Vector& at,
                        double epsilon = 1e-5);

/// max over entries of |a - n| / max(|a|, |n|, 1e-6).
double max_rel_error(const Vector& analytic, const Vector& numeric);

struct TrainConfig {
  Index steps = 200;
  double learning_rate = 0.2;
  double max_grad_norm = 2.0;  // global-norm clip; 0 disables
  LossWeights weights;

  void validate() const;
};

struct TrainResult {
  HeadParams head;
  Matrix proj;
  std::vector<LossBreakdown> trace;  // steps + 1 entries; front = untrained loss
};

/// Full-batch gradient descent. Throws with the offending step index if the
/// loss ever stops being finite.
TrainResult train_toy(const std::vector<TrainSample>& samples, HeadParams head, Matrix proj,
                      const TrainConfig& cfg);

}  // namespace cldt
