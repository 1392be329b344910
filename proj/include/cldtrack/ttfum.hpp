#pragma once

#include "cldtrack/types.hpp"

#include <deque>
#include <optional>
#include <string>

namespace cldt {

enum class Aggregation { Average, Last, Max, Weighted };

std::string to_string(Aggregation mode);
Aggregation aggregation_from_string(const std::string& s);

/// How the stored search-text tokens collapse into one history vector.
/// Weighted mode carries one weight per stored vector, oldest first.
struct AggregationStrategy {
  Aggregation mode = Aggregation::Average;
  Vector weights;

  static AggregationStrategy average() { return {Aggregation::Average, {}}; }
  static AggregationStrategy last() { return {Aggregation::Last, {}}; }
  static AggregationStrategy max() { return {Aggregation::Max, {}}; }
  static AggregationStrategy weighted(Vector w) {
    return {Aggregation::Weighted, std::move(w)};
  }

  /// Exponentially decaying weights (factor `decay` per step of age), newest
  /// entry heaviest, normalized to sum to one. Oldest-first to match the
  /// window buffer.
  static Vector decay_weights(Index n, double decay = 0.5);
};

/// Sliding window over the per-frame search-text probability vectors. The
/// window also owns the attention-weight cache used between updates.
class TemporalTextWindow {
 public:
  explicit TemporalTextWindow(Index capacity, Index update_interval = 1);

  /// Appends one search-frame token vector (a probability vector; dimension
  /// is fixed by the first push), evicting the oldest beyond capacity.
  void push(const Vector& search_text);

  Index size() const { return static_cast<Index>(buffer_.size()); }
  Index capacity() const { return capacity_; }
  Index update_interval() const { return update_interval_; }
  std::uint64_t frames_seen() const { return frames_seen_; }
  const std::deque<Vector>& buffer() const { return buffer_; }
  const std::optional<Vector>& cached_weights() const { return cached_weights_; }
  void store_weights(Vector w) { cached_weights_ = std::move(w); }

 private:
  Index capacity_;
  Index update_interval_;
  std::uint64_t frames_seen_ = 0;
  std::deque<Vector> buffer_;
  std::optional<Vector> cached_weights_;
};

/// Collapses the window into a single history vector. The buffer must be
/// non-empty; weighted mode requires exactly one weight per stored vector.
Vector aggregate(const TemporalTextWindow& window, const AggregationStrategy& strategy);

/// softmax(-|exemplar - aggregated|): dimensions where the exemplar token and
/// the history agree get the largest weights.
Vector attention_weights(const Vector& exemplar_text, const Vector& aggregated);

/// Element-wise reweighting of the exemplar token.
Vector apply_attention(const Vector& weights, const Vector& exemplar_text);

/// Per-frame attention weights with interval caching: recomputes from the
/// window every `update_interval` frames, reuses the cache in between, and
/// falls back to uniform weights before anything is cached (cold start).
Vector update(const Vector& exemplar_text, TemporalTextWindow& window,
              const AggregationStrategy& strategy);

}  // namespace cldt
