#include "cldtrack/adapter.hpp"

#include "cldtrack/core.hpp"

#include <cmath>

namespace cldt {

void AdapterState::validate() const {
  const Index q = proj.rows();
  if (q < 1 || proj.cols() != q)
    throw DataError("adapter: projection must be square and non-empty");
  if (meta_weight.rows() != q || meta_weight.cols() != q)
    throw DataError("adapter: meta-net weight must be dim x dim");
  if (meta_bias.size() != q) throw DataError("adapter: meta-net bias must have length dim");
  if (context.rows() > 0 && context.cols() != q)
    throw DataError("adapter: context rows must have length dim");
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw DataError("adapter: temperature must be positive and finite");
}

AdapterState AdapterState::init(Index dim, Index context_count, double temperature,
                                Rng& rng) {
  if (dim < 1) throw ConfigError("adapter init: dim must be positive");
  if (context_count < 0) throw ConfigError("adapter init: context_count must be >= 0");
  AdapterState s;
  s.context = gaussian_matrix(context_count, dim, rng, 0.02);
  s.meta_weight = gaussian_matrix(dim, dim, rng, 0.02);
  s.meta_bias = gaussian_vector(dim, rng, 0.02);
  s.proj = Matrix::Identity(dim, dim) + gaussian_matrix(dim, dim, rng, 0.02);
  s.temperature = temperature;
  s.validate();
  return s;
}

Vector condition_tokens(const Vector& image_feat, const AdapterState& state,
                        const Vector& entry_embedding) {
  state.validate();
  const Index q = state.dim();
  if (image_feat.size() != q)
    throw DataError("condition_tokens: image feature dimension " +
                    std::to_string(image_feat.size()) + " does not match adapter dim " +
                    std::to_string(q));
  if (entry_embedding.size() != q)
    throw DataError("condition_tokens: description dimension " +
                    std::to_string(entry_embedding.size()) +
                    " does not match adapter dim " + std::to_string(q));
  if (state.context_count() == 0) return l2_normalize(entry_embedding);

  const Vector shift = state.meta_weight * image_feat + state.meta_bias;
  const Vector mean_context = state.context.colwise().mean().transpose() + shift;
  return l2_normalize(((mean_context + entry_embedding) / 2.0).eval());
}

Vector score_descriptions(const Vector& image_feat, const BagOfDescriptions& bag,
                          const AdapterState& state) {
  if (bag.entries.empty()) throw DataError("score_descriptions: bag has no entries");
  Vector scores(bag.size());
  for (Index i = 0; i < bag.size(); ++i) {
    const Vector prompt =
        condition_tokens(image_feat, state, bag.entries[static_cast<std::size_t>(i)].embedding);
    scores(i) = cosine_sim(image_feat, prompt);
  }
  return softmax(scores, state.temperature);
}

SelectedDescription select_description(const Vector& image_feat,
                                       const BagOfDescriptions& bag,
                                       const AdapterState& state) {
  const Vector probs = score_descriptions(image_feat, bag, state);
  SelectedDescription out;
  out.index = argmax(probs);
  out.probability = probs(out.index);
  out.raw = bag.entries[static_cast<std::size_t>(out.index)].embedding;
  out.projected = project_normalize(out.raw, state);
  return out;
}

Vector project_normalize(const Vector& raw, const AdapterState& state) {
  state.validate();
  if (raw.size() != state.dim())
    throw DataError("project_normalize: token dimension " + std::to_string(raw.size()) +
                    " does not match adapter dim " + std::to_string(state.dim()));
  return softmax((state.proj * raw).eval());
}

}  // namespace cldt
