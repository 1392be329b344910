#include "doctest.h"

#include "cldtrack/core.hpp"
#include "cldtrack/random.hpp"

#include <cmath>
#include <vector>

using namespace cldt;

namespace {

// Extended-precision reference for softmax, evaluated independently of the
// library code path.
std::vector<double> softmax_oracle(const std::vector<double>& scores, double temperature) {
  long double m = scores[0];
  for (double s : scores) m = std::max<long double>(m, s);
  std::vector<long double> e(scores.size());
  long double sum = 0.0L;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    e[i] = std::exp((static_cast<long double>(scores[i]) - m) / temperature);
    sum += e[i];
  }
  std::vector<double> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    out[i] = static_cast<double>(e[i] / sum);
  return out;
}

Vector make(std::initializer_list<double> v) {
  Vector x(static_cast<Index>(v.size()));
  Index i = 0;
  for (double e : v) x(i++) = e;
  return x;
}

}  // namespace

TEST_CASE("l2_normalize known values and unit norm") {
  Vector v = l2_normalize(make({3.0, 4.0}));
  CHECK(v(0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(v(1) == doctest::Approx(0.8).epsilon(1e-15));

  Rng rng(101);
  for (int trial = 0; trial < 200; ++trial) {
    Index n = 1 + static_cast<Index>(rng.uniform_index(64));
    Vector x = gaussian_vector(n, rng);
    if (x.norm() == 0.0) continue;
    CHECK(std::abs(l2_normalize(x).norm() - 1.0) <= 1e-12);
  }
}

TEST_CASE("l2_normalize rejects degenerate input") {
  CHECK_THROWS_AS(l2_normalize(Vector::Zero(4)), DataError);
  CHECK_THROWS_AS(l2_normalize(Vector()), DataError);
  Vector bad = make({1.0, std::nan("")});
  CHECK_THROWS_AS(l2_normalize(bad), DataError);
}

TEST_CASE("cosine_sim known values, symmetry and range") {
  CHECK(cosine_sim(make({1.0, 0.0}), make({0.0, 1.0})) == doctest::Approx(0.0));
  Vector v = make({0.3, -1.2, 4.0});
  CHECK(cosine_sim(v, v) == doctest::Approx(1.0).epsilon(1e-14));

  Rng rng(202);
  for (int trial = 0; trial < 200; ++trial) {
    Index n = 2 + static_cast<Index>(rng.uniform_index(32));
    Vector a = gaussian_vector(n, rng);
    Vector b = gaussian_vector(n, rng);
    if (a.norm() == 0.0 || b.norm() == 0.0) continue;
    double s = cosine_sim(a, b);
    CHECK(s == doctest::Approx(cosine_sim(b, a)).epsilon(1e-15));
    CHECK(s <= 1.0 + 1e-12);
    CHECK(s >= -1.0 - 1e-12);
  }
}

TEST_CASE("cosine_sim error reporting") {
  CHECK_THROWS_WITH_AS(cosine_sim(make({1.0, 2.0}), make({1.0, 2.0, 3.0})),
                       "cosine_sim: dimension mismatch (2 vs 3)", DataError);
  CHECK_THROWS_AS(cosine_sim(Vector::Zero(3), make({1.0, 0.0, 0.0})), DataError);
}

TEST_CASE("softmax uniform, stability and oracle agreement") {
  Vector u = softmax(make({0.0, 0.0}));
  CHECK(u(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(u(1) == doctest::Approx(0.5).epsilon(1e-15));

  // Max subtraction keeps huge scores finite.
  Vector big = softmax(make({1000.0, 0.0}));
  CHECK(std::isfinite(big(0)));
  CHECK(big(0) == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(303);
  for (int trial = 0; trial < 100; ++trial) {
    Index n = 1 + static_cast<Index>(rng.uniform_index(16));
    std::vector<double> raw(static_cast<std::size_t>(n));
    for (double& x : raw) x = rng.uniform(-50.0, 50.0);
    double temp = rng.uniform(0.05, 3.0);
    Vector scores(n);
    for (Index i = 0; i < n; ++i) scores(i) = raw[static_cast<std::size_t>(i)];
    Vector got = softmax(scores, temp);
    std::vector<double> want = softmax_oracle(raw, temp);
    for (Index i = 0; i < n; ++i)
      CHECK(std::abs(got(i) - want[static_cast<std::size_t>(i)]) <= 1e-12);
  }
}

TEST_CASE("softmax output is a probability vector invariant to shifts") {
  Rng rng(404);
  for (int trial = 0; trial < 100; ++trial) {
    Index n = 1 + static_cast<Index>(rng.uniform_index(20));
    Vector s = gaussian_vector(n, rng, 10.0);
    Vector p = softmax(s);
    CHECK(is_probability_vector(p, 1e-9));
    double shift = rng.uniform(-100.0, 100.0);
    Vector p2 = softmax((s.array() + shift).matrix());
    CHECK((p - p2).cwiseAbs().maxCoeff() <= 1e-12);
    // Temperature rescales but never reorders.
    CHECK(argmax(softmax(s, 0.1)) == argmax(s));
    CHECK(argmax(softmax(s, 2.5)) == argmax(s));
  }
}

TEST_CASE("softmax input validation") {
  CHECK_THROWS_AS(softmax(Vector()), DataError);
  CHECK_THROWS_AS(softmax(make({1.0, 2.0}), 0.0), DataError);
  CHECK_THROWS_AS(softmax(make({1.0, 2.0}), -1.0), DataError);
  Vector bad = make({1.0, std::numeric_limits<double>::infinity()});
  CHECK_THROWS_AS(softmax(bad), DataError);
}

TEST_CASE("argmax picks the largest entry, lowest index on ties") {
  CHECK(argmax(make({1.0, 3.0, 2.0})) == 1);
  CHECK(argmax(make({2.0, 5.0, 5.0})) == 1);
  CHECK(argmax(make({7.0})) == 0);
  CHECK_THROWS_AS(argmax(Vector()), DataError);
}

TEST_CASE("rng streams are reproducible and distributions sane") {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 64; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng c(7);
  double mean = 0.0;
  double sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double g = c.gaussian();
    mean += g;
    sq += g * g;
  }
  mean /= n;
  sq /= n;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(sq - 1.0) < 0.05);

  Rng d(9);
  for (int i = 0; i < 1000; ++i) {
    double u = d.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  CHECK_THROWS_AS(d.uniform_index(0), DataError);
}

TEST_CASE("seed derivation separates roles") {
  CHECK(derive_seed(1234, "bag") != derive_seed(1234, "head"));
  CHECK(derive_seed(1234, "bag") == derive_seed(1234, "bag"));
  CHECK(derive_seed(1234, "bag") != derive_seed(1235, "bag"));
}
