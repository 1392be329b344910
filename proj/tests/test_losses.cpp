#include "doctest.h"

#include "cldtrack/losses.hpp"
#include "cldtrack/random.hpp"

#include <cmath>

using namespace cldt;

TEST_CASE("iou on hand-checked boxes") {
  const BBox a{0, 0, 2, 2};
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, BBox{1, 1, 2, 2}) == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
  CHECK(iou(a, BBox{5, 5, 2, 2}) == 0.0);
  CHECK(iou(a, BBox{2, 0, 2, 2}) == 0.0);  // touching edges do not overlap
  CHECK(iou(a, BBox{1, 1, 2, 2}) == iou(BBox{1, 1, 2, 2}, a));
  CHECK(iou(a, BBox{0, 0, 0, 2}) == 0.0);  // degenerate
}

TEST_CASE("generalized iou loss on hand-checked boxes") {
  const auto box = [](double x, double y, double w, double h) {
    return BoxCorners::from_box(BBox{x, y, w, h});
  };

  CHECK(giou_loss(box(0, 0, 2, 2), box(0, 0, 2, 2)) == 0.0);

  // Overlap 1, union 7, hull 9: loss = 1 - (1/7 - 2/9) = 68/63.
  CHECK(giou_loss(box(0, 0, 2, 2), box(1, 1, 2, 2)) ==
        doctest::Approx(68.0 / 63.0).epsilon(1e-15));

  // Disjoint: union 6, hull 8: loss = 1 - (0 - 2/8) = 1.25 exactly.
  CHECK(giou_loss(box(0, 0, 2, 2), box(3, 0, 1, 2)) == 1.25);

  // Loss stays within [0, 2] and grows as the boxes separate.
  double prev = 0.0;
  for (int d = 1; d <= 40; d += 3) {
    const double v = giou_loss(box(0, 0, 1, 1), box(d, 0, 1, 1));
    CHECK(v >= 0.0);
    CHECK(v < 2.0);
    CHECK(v > prev);
    prev = v;
  }

  CHECK_THROWS_AS(giou_loss(box(0, 0, 0, 2), box(0, 0, 2, 2)), DataError);
  CHECK_THROWS_AS(giou_loss(box(0, 0, 2, 2), box(0, 0, 2, 0)), DataError);
}

TEST_CASE("giou gradient agrees with central differences") {
  Rng rng(321);
  const double eps = 1e-6;
  for (int trial = 0; trial < 40; ++trial) {
    BoxCorners pred;
    pred.x1 = rng.uniform(0.0, 0.5);
    pred.y1 = rng.uniform(0.0, 0.5);
    pred.x2 = pred.x1 + rng.uniform(0.05, 0.5);
    pred.y2 = pred.y1 + rng.uniform(0.05, 0.5);
    BoxCorners gt;
    gt.x1 = rng.uniform(0.0, 0.5);
    gt.y1 = rng.uniform(0.0, 0.5);
    gt.x2 = gt.x1 + rng.uniform(0.05, 0.5);
    gt.y2 = gt.y1 + rng.uniform(0.05, 0.5);

    BoxCorners grad;
    giou_loss(pred, gt, &grad);

    double* fields[4] = {&pred.x1, &pred.y1, &pred.x2, &pred.y2};
    const double got[4] = {grad.x1, grad.y1, grad.x2, grad.y2};
    for (int i = 0; i < 4; ++i) {
      const double keep = *fields[i];
      *fields[i] = keep + eps;
      const double hi = giou_loss(pred, gt);
      *fields[i] = keep - eps;
      const double lo = giou_loss(pred, gt);
      *fields[i] = keep;
      const double fd = (hi - lo) / (2.0 * eps);
      CHECK(std::abs(got[i] - fd) / std::max({std::abs(got[i]), std::abs(fd), 1e-6}) < 1e-4);
    }
  }
}

TEST_CASE("giou gradient points toward the target") {
  // Prediction entirely to the left of the target: growing x2 must shrink the
  // loss, so the derivative there is negative.
  const BoxCorners pred{0.0, 0.0, 0.2, 0.2};
  const BoxCorners gt{0.6, 0.0, 0.9, 0.2};
  BoxCorners grad;
  giou_loss(pred, gt, &grad);
  CHECK(grad.x2 < 0.0);
  CHECK(grad.x1 > 0.0);
}

TEST_CASE("mean corner l1 loss and subgradient") {
  const BoxCorners pred{0.1, 0.2, 0.5, 0.9};
  const BoxCorners gt{0.2, 0.2, 0.3, 1.0};
  BoxCorners grad;
  const double v = l1_loss(pred, gt, &grad);
  CHECK(v == doctest::Approx((0.1 + 0.0 + 0.2 + 0.1) / 4.0).epsilon(1e-15));
  CHECK(grad.x1 == -0.25);
  CHECK(grad.y1 == 0.0);
  CHECK(grad.x2 == 0.25);
  CHECK(grad.y2 == -0.25);
  CHECK(l1_loss(pred, pred) == 0.0);
}

TEST_CASE("focal loss: perfect prediction costs nothing, confident mistakes cost a lot") {
  Vector target(4);
  target << 1.0, 0.2, 0.0, 0.0;
  Vector perfect(4);
  perfect << 1.0, 0.0, 0.0, 0.0;
  CHECK(focal_loss(perfect, target) == 0.0);

  Vector wrong(4);
  wrong << 0.01, 0.99, 0.99, 0.99;
  CHECK(focal_loss(wrong, target) > 3.0);

  // Hand evaluation with two positives: the sum divides by 2.
  Vector t2(3), p2(3);
  t2 << 1.0, 1.0, 0.5;
  p2 << 0.7, 0.4, 0.2;
  const double pos1 = -std::pow(0.3, 2.0) * std::log(0.7);
  const double pos2 = -std::pow(0.6, 2.0) * std::log(0.4);
  const double neg = -std::pow(0.5, 4.0) * std::pow(0.2, 2.0) * std::log(0.8);
  CHECK(focal_loss(p2, t2) == doctest::Approx((pos1 + pos2 + neg) / 2.0).epsilon(1e-12));

  CHECK_THROWS_AS(focal_loss(Vector::Zero(3), Vector::Zero(3)), DataError);  // no positive
  Vector bad_t(2), okp(2);
  bad_t << 1.0, 1.5;
  okp << 0.5, 0.5;
  CHECK_THROWS_AS(focal_loss(okp, bad_t), DataError);
  Vector bad_p(2), okt(2);
  bad_p << 0.5, -0.1;
  okt << 1.0, 0.0;
  CHECK_THROWS_AS(focal_loss(bad_p, okt), DataError);
  CHECK_THROWS_AS(focal_loss(okp, Vector::Ones(3)), DataError);  // size mismatch
}

TEST_CASE("focal gradient agrees with central differences") {
  Rng rng(77);
  Vector target = gaussian_target_map(4, 4, 1, 2);
  Vector pred(16);
  for (Index i = 0; i < 16; ++i) pred(i) = rng.uniform(0.05, 0.95);

  Vector grad;
  focal_loss(pred, target, &grad);
  const double eps = 1e-6;
  for (Index i = 0; i < 16; ++i) {
    Vector p = pred;
    p(i) = pred(i) + eps;
    const double hi = focal_loss(p, target);
    p(i) = pred(i) - eps;
    const double lo = focal_loss(p, target);
    const double fd = (hi - lo) / (2.0 * eps);
    CHECK(std::abs(grad(i) - fd) / std::max({std::abs(grad(i)), std::abs(fd), 1e-6}) < 1e-4);
  }
}

TEST_CASE("gaussian target map peaks at exactly one") {
  const Vector m = gaussian_target_map(5, 7, 2, 3, 1.0);
  REQUIRE(m.size() == 35);
  CHECK(m(2 * 7 + 3) == 1.0);  // exact peak
  CHECK(m.maxCoeff() == 1.0);
  CHECK(m(2 * 7 + 4) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
  CHECK(m(1 * 7 + 3) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
  CHECK(m(0) == doctest::Approx(std::exp(-(4.0 + 9.0) / 2.0)).epsilon(1e-15));
  CHECK(m.minCoeff() > 0.0);
  // Symmetric neighbors match.
  CHECK(m(2 * 7 + 2) == m(2 * 7 + 4));

  CHECK_THROWS_AS(gaussian_target_map(5, 7, 5, 3), DataError);
  CHECK_THROWS_AS(gaussian_target_map(5, 7, 2, 3, 0.0), ConfigError);
}
