#include "cldtrack/ttfum.hpp"

#include "cldtrack/core.hpp"

#include <cmath>

namespace cldt {

std::string to_string(Aggregation mode) {
  switch (mode) {
    case Aggregation::Average: return "average";
    case Aggregation::Last: return "last";
    case Aggregation::Max: return "max";
    case Aggregation::Weighted: return "weighted";
  }
  throw DataError("to_string: invalid aggregation value");
}

Aggregation aggregation_from_string(const std::string& s) {
  if (s == "average") return Aggregation::Average;
  if (s == "last") return Aggregation::Last;
  if (s == "max") return Aggregation::Max;
  if (s == "weighted") return Aggregation::Weighted;
  throw ConfigError("unknown aggregation strategy '" + s +
                    "' (expected average, last, max or weighted)");
}

Vector AggregationStrategy::decay_weights(Index n, double decay) {
  if (n < 1) throw ConfigError("decay_weights: n must be at least 1");
  if (!(decay > 0.0) || !std::isfinite(decay))
    throw ConfigError("decay_weights: decay must be positive and finite");
  Vector w(n);
  for (Index i = 0; i < n; ++i) w(i) = std::pow(decay, static_cast<double>(n - 1 - i));
  w /= w.sum();
  return w;
}

TemporalTextWindow::TemporalTextWindow(Index capacity, Index update_interval)
    : capacity_(capacity), update_interval_(update_interval) {
  if (capacity < 1) throw ConfigError("temporal window: capacity must be at least 1");
  if (update_interval < 1)
    throw ConfigError("temporal window: update interval must be at least 1");
}

void TemporalTextWindow::push(const Vector& search_text) {
  if (!is_probability_vector(search_text, 1e-6))
    throw DataError("temporal window: pushed vector is not a probability vector");
  if (!buffer_.empty() && search_text.size() != buffer_.front().size())
    throw DataError("temporal window: pushed dimension " +
                    std::to_string(search_text.size()) + " differs from stored " +
                    std::to_string(buffer_.front().size()));
  buffer_.push_back(search_text);
  if (static_cast<Index>(buffer_.size()) > capacity_) buffer_.pop_front();
  ++frames_seen_;
}

Vector aggregate(const TemporalTextWindow& window, const AggregationStrategy& strategy) {
  const auto& buf = window.buffer();
  if (buf.empty()) throw DataError("aggregate: temporal window is empty");
  switch (strategy.mode) {
    case Aggregation::Average: {
      Vector sum = Vector::Zero(buf.front().size());
      for (const Vector& v : buf) sum += v;
      return sum / static_cast<double>(buf.size());
    }
    case Aggregation::Last:
      return buf.back();
    case Aggregation::Max: {
      Vector m = buf.front();
      for (const Vector& v : buf) m = m.cwiseMax(v);
      return m;
    }
    case Aggregation::Weighted: {
      if (strategy.weights.size() != static_cast<Index>(buf.size()))
        throw DataError("aggregate: " + std::to_string(strategy.weights.size()) +
                        " weights for " + std::to_string(buf.size()) +
                        " stored vectors");
      if (!strategy.weights.allFinite())
        throw DataError("aggregate: weights must be finite");
      Vector sum = Vector::Zero(buf.front().size());
      Index i = 0;
      for (const Vector& v : buf) sum += strategy.weights(i++) * v;
      return sum;
    }
  }
  throw DataError("aggregate: invalid aggregation value");
}

Vector attention_weights(const Vector& exemplar_text, const Vector& aggregated) {
  if (exemplar_text.size() != aggregated.size())
    throw DataError("attention_weights: dimension mismatch (" +
                    std::to_string(exemplar_text.size()) + " vs " +
                    std::to_string(aggregated.size()) + ")");
  return softmax((-(exemplar_text - aggregated).cwiseAbs()).eval());
}

Vector apply_attention(const Vector& weights, const Vector& exemplar_text) {
  if (weights.size() != exemplar_text.size())
    throw DataError("apply_attention: dimension mismatch (" +
                    std::to_string(weights.size()) + " vs " +
                    std::to_string(exemplar_text.size()) + ")");
  return weights.cwiseProduct(exemplar_text);
}

Vector update(const Vector& exemplar_text, TemporalTextWindow& window,
              const AggregationStrategy& strategy) {
  if (exemplar_text.size() == 0) throw DataError("update: empty exemplar token");
  const bool due = window.frames_seen() % static_cast<std::uint64_t>(
                                               window.update_interval()) == 0;
  if (due && window.size() > 0) {
    Vector w = attention_weights(exemplar_text, aggregate(window, strategy));
    window.store_weights(w);
    return w;
  }
  if (window.cached_weights()) {
    const Vector& cached = *window.cached_weights();
    if (cached.size() != exemplar_text.size())
      throw DataError("update: cached weights do not match the exemplar dimension");
    return cached;
  }
  // Cold start: nothing stored and nothing cached yet.
  Vector uniform = Vector::Constant(exemplar_text.size(),
                                    1.0 / static_cast<double>(exemplar_text.size()));
  window.store_weights(uniform);
  return uniform;
}

}  // namespace cldt
