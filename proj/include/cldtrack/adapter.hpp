#pragma once

#include "cldtrack/bag.hpp"
#include "cldtrack/random.hpp"
#include "cldtrack/types.hpp"

namespace cldt {

/// Learnable state of the image-conditioned prompt adapter: shared context
/// rows, a meta-net that shifts them per image, a token projection and the
/// selection temperature.
struct AdapterState {
  Matrix context;      // context_count x dim
  Matrix meta_weight;  // dim x dim
  Vector meta_bias;    // dim
  Matrix proj;         // dim x dim
  double temperature = 0.07;

  Index dim() const { return proj.rows(); }
  Index context_count() const { return context.rows(); }
  void validate() const;

  /// Small-gaussian initialization; the projection starts near identity so
  /// untrained adapters pass tokens through roughly unchanged.
  static AdapterState init(Index dim, Index context_count, double temperature, Rng& rng);
};

/// Image-conditioned prompt for one description embedding: every context row
/// is shifted by the meta-net output, the rows are averaged with the
/// description token, and the blend is renormalized. With no context rows the
/// description token itself (normalized) is the prompt.
Vector condition_tokens(const Vector& image_feat, const AdapterState& state,
                        const Vector& entry_embedding);

/// Probability over bag entries: softmax at the adapter temperature of the
/// image/prompt cosine scores.
Vector score_descriptions(const Vector& image_feat, const BagOfDescriptions& bag,
                          const AdapterState& state);

struct SelectedDescription {
  Index index = 0;
  double probability = 0;
  Vector raw;        // the stored bag embedding
  Vector projected;  // softmax-normalized projection of `raw`
};

/// Hard argmax over score_descriptions (ties to the lowest index).
SelectedDescription select_description(const Vector& image_feat,
                                       const BagOfDescriptions& bag,
                                       const AdapterState& state);

/// Projected token normalized into a probability vector.
Vector project_normalize(const Vector& raw, const AdapterState& state);

}  // namespace cldt
