#include "doctest.h"

#include "cldtrack/core.hpp"
#include "cldtrack/random.hpp"
#include "cldtrack/ttfum.hpp"

#include <cmath>

using namespace cldt;

namespace {

Vector prob(std::initializer_list<double> raw) {
  Vector v(static_cast<Index>(raw.size()));
  Index i = 0;
  for (double x : raw) v(i++) = x;
  return softmax(v);
}

Vector drifting_prob(Index dim, int step) {
  Vector v(dim);
  for (Index i = 0; i < dim; ++i)
    v(i) = std::sin(0.7 * static_cast<double>(step) + static_cast<double>(i));
  return softmax(v);
}

}  // namespace

TEST_CASE("aggregation tags round trip") {
  for (Aggregation a : {Aggregation::Average, Aggregation::Last, Aggregation::Max,
                        Aggregation::Weighted})
    CHECK(aggregation_from_string(to_string(a)) == a);
  CHECK_THROWS_AS(aggregation_from_string("mean"), ConfigError);
}

TEST_CASE("decay weights are normalized and newest-heaviest") {
  const Vector w = AggregationStrategy::decay_weights(3);
  REQUIRE(w.size() == 3);
  CHECK(w(0) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
  CHECK(w(1) == doctest::Approx(2.0 / 7.0).epsilon(1e-12));
  CHECK(w(2) == doctest::Approx(4.0 / 7.0).epsilon(1e-12));
  CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-12));

  const Vector single = AggregationStrategy::decay_weights(1);
  CHECK(single(0) == 1.0);
  CHECK_THROWS_AS(AggregationStrategy::decay_weights(0), ConfigError);
}

TEST_CASE("window pushes validate content and evict oldest first") {
  TemporalTextWindow w(3);
  CHECK(w.capacity() == 3);
  CHECK(w.size() == 0);

  const Vector p1 = prob({3.0, 0.0, 0.0, 0.0});
  const Vector p2 = prob({0.0, 3.0, 0.0, 0.0});
  const Vector p3 = prob({0.0, 0.0, 3.0, 0.0});
  const Vector p4 = prob({0.0, 0.0, 0.0, 3.0});
  w.push(p1);
  w.push(p2);
  w.push(p3);
  CHECK(w.size() == 3);
  w.push(p4);
  CHECK(w.size() == 3);
  CHECK(w.frames_seen() == 4);
  CHECK((w.buffer().front() - p2).cwiseAbs().maxCoeff() == 0.0);
  CHECK((w.buffer().back() - p4).cwiseAbs().maxCoeff() == 0.0);

  Vector negative(4);
  negative << 0.5, 0.6, -0.1, 0.0;
  CHECK_THROWS_AS(w.push(negative), DataError);
  Vector not_normalized = Vector::Constant(4, 0.3);
  CHECK_THROWS_AS(w.push(not_normalized), DataError);
  CHECK_THROWS_AS(w.push(prob({1.0, 2.0})), DataError);  // dimension drift
  CHECK_THROWS_AS(TemporalTextWindow(0), ConfigError);
  CHECK_THROWS_AS(TemporalTextWindow(3, 0), ConfigError);
}

TEST_CASE("aggregation modes match their definitions") {
  TemporalTextWindow w(4);
  const Vector a = prob({2.0, 0.0, 0.0});
  const Vector b = prob({0.0, 2.0, 0.0});
  const Vector c = prob({0.0, 0.0, 2.0});
  w.push(a);
  w.push(b);
  w.push(c);

  const Vector avg = aggregate(w, AggregationStrategy::average());
  CHECK((avg - (a + b + c) / 3.0).cwiseAbs().maxCoeff() <= 1e-15);

  const Vector last = aggregate(w, AggregationStrategy::last());
  CHECK((last - c).cwiseAbs().maxCoeff() == 0.0);

  const Vector mx = aggregate(w, AggregationStrategy::max());
  for (Index i = 0; i < 3; ++i)
    CHECK(mx(i) == std::max({a(i), b(i), c(i)}));

  Vector weights(3);
  weights << 0.2, 0.3, 0.5;
  const Vector wavg = aggregate(w, AggregationStrategy::weighted(weights));
  CHECK((wavg - (0.2 * a + 0.3 * b + 0.5 * c)).cwiseAbs().maxCoeff() <= 1e-15);

  // Exactly one weight per stored vector.
  CHECK_THROWS_AS(aggregate(w, AggregationStrategy::weighted(Vector::Ones(2))), DataError);

  TemporalTextWindow empty(3);
  CHECK_THROWS_AS(aggregate(empty, AggregationStrategy::average()), DataError);
}

TEST_CASE("attention weights: uniform on agreement, smaller where histories differ") {
  const Vector e = prob({1.0, 2.0, 0.5, 0.0});

  // Perfect agreement: all differences are zero, weights exactly uniform.
  const Vector uniform = attention_weights(e, e);
  for (Index i = 0; i < 4; ++i) CHECK(uniform(i) == 0.25);

  Vector agg = e;
  agg(2) += 0.2;  // dimension 2 now disagrees most
  agg(0) += 0.05;
  const Vector w = attention_weights(e, agg);
  CHECK(is_probability_vector(w, 1e-9));
  CHECK(w(2) == w.minCoeff());
  CHECK(w(1) == w.maxCoeff());  // untouched dimensions share the max
  CHECK(w(3) == w(1));

  // Scalar reference.
  Vector scores(4);
  for (Index i = 0; i < 4; ++i) scores(i) = -std::abs(e(i) - agg(i));
  const Vector want = softmax(scores);
  CHECK((w - want).cwiseAbs().maxCoeff() <= 1e-15);

  CHECK_THROWS_AS(attention_weights(e, Vector::Ones(3)), DataError);

  const Vector reweighted = apply_attention(w, e);
  for (Index i = 0; i < 4; ++i) CHECK(reweighted(i) == w(i) * e(i));
  CHECK_THROWS_AS(apply_attention(w, Vector::Ones(3)), DataError);
}

TEST_CASE("update recomputes on the interval and reuses the cache between") {
  const Index dim = 6;
  const Vector exemplar = drifting_prob(dim, 100);
  TemporalTextWindow w(5, 3);
  AggregationStrategy strategy = AggregationStrategy::average();

  // Frames 1 and 2: interval has not fired since the first cache write, so
  // the cold-start uniform persists.
  w.push(drifting_prob(dim, 1));
  const Vector w1 = update(exemplar, w, strategy);
  CHECK((w1 - Vector::Constant(dim, 1.0 / dim)).cwiseAbs().maxCoeff() == 0.0);
  w.push(drifting_prob(dim, 2));
  const Vector w2 = update(exemplar, w, strategy);
  CHECK((w2 - w1).cwiseAbs().maxCoeff() == 0.0);

  // Frame 3: recompute from the window.
  w.push(drifting_prob(dim, 3));
  const Vector w3 = update(exemplar, w, strategy);
  const Vector expect3 = attention_weights(exemplar, aggregate(w, strategy));
  CHECK((w3 - expect3).cwiseAbs().maxCoeff() == 0.0);
  CHECK((w3 - w1).cwiseAbs().maxCoeff() > 0.0);

  // Frames 4 and 5 reuse the frame-3 cache bit for bit despite new pushes.
  w.push(drifting_prob(dim, 4));
  const Vector w4 = update(exemplar, w, strategy);
  CHECK((w4 - w3).cwiseAbs().maxCoeff() == 0.0);
  w.push(drifting_prob(dim, 5));
  const Vector w5 = update(exemplar, w, strategy);
  CHECK((w5 - w3).cwiseAbs().maxCoeff() == 0.0);

  // Frame 6 recomputes again over the drifted window.
  w.push(drifting_prob(dim, 6));
  const Vector w6 = update(exemplar, w, strategy);
  CHECK((w6 - w3).cwiseAbs().maxCoeff() > 0.0);
  CHECK((w6 - attention_weights(exemplar, aggregate(w, strategy))).cwiseAbs().maxCoeff() ==
        0.0);
}

TEST_CASE("cold start yields uniform weights before any push") {
  TemporalTextWindow w(4, 1);
  const Vector exemplar = prob({0.5, 1.5, 2.5});
  const Vector w0 = update(exemplar, w, AggregationStrategy::average());
  CHECK((w0 - Vector::Constant(3, 1.0 / 3.0)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(w.cached_weights().has_value());
}

TEST_CASE("window of size one makes average and last identical bit for bit") {
  TemporalTextWindow w_avg(1, 1);
  TemporalTextWindow w_last(1, 1);
  const Vector exemplar = drifting_prob(8, 50);
  for (int step = 1; step <= 12; ++step) {
    const Vector v = drifting_prob(8, step);
    w_avg.push(v);
    w_last.push(v);
    const Vector a = update(exemplar, w_avg, AggregationStrategy::average());
    const Vector l = update(exemplar, w_last, AggregationStrategy::last());
    CHECK((a - l).cwiseAbs().maxCoeff() == 0.0);
  }
}
