#include "doctest.h"

#include "cldtrack/adapter.hpp"
#include "cldtrack/core.hpp"
#include "cldtrack/encoders.hpp"
#include "cldtrack/fusion.hpp"
#include "cldtrack/random.hpp"

#include <cmath>
#include <memory>
#include <vector>

using namespace cldt;

namespace {

BagOfDescriptions make_bag(const EncoderBackend& enc,
                           const std::vector<std::string>& texts) {
  BagOfDescriptions bag;
  for (const auto& t : texts) {
    DescriptionEntry e;
    e.kind = EntryKind::SemanticContext;
    e.provenance = Provenance::Synonym;
    e.text = t;
    e.embedding = enc.encode_text(t);
    bag.entries.push_back(std::move(e));
  }
  return bag;
}

ImagePatch flat_patch(Index h, Index w, double value) {
  ImagePatch p;
  p.channels = {Matrix::Constant(h, w, value)};
  return p;
}

// Frame with a brighter axis-aligned square on a mid-gray background.
ImagePatch square_frame(Index h, Index w, const BBox& box) {
  ImagePatch p = flat_patch(h, w, 0.25);
  const Index r0 = static_cast<Index>(std::llround(box.y));
  const Index c0 = static_cast<Index>(std::llround(box.x));
  const Index rh = static_cast<Index>(std::llround(box.h));
  const Index cw = static_cast<Index>(std::llround(box.w));
  for (Index r = r0; r < r0 + rh; ++r) {
    for (Index c = c0; c < c0 + cw; ++c) {
      if (r >= 0 && r < h && c >= 0 && c < w) p.channels[0](r, c) = 0.9;
    }
  }
  return p;
}

SearchGeometry small_geometry() {
  SearchGeometry g;
  g.search_size = 32;
  g.exemplar_size = 16;
  g.grid = 4;
  return g;
}

}  // namespace

TEST_CASE("search geometry validation") {
  SearchGeometry g;
  CHECK_NOTHROW(g.validate());
  CHECK(g.stride() == doctest::Approx(24.0));

  SearchGeometry bad = g;
  bad.search_size = 383;  // not divisible by 16
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = g;
  bad.grid = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = g;
  bad.search_area_factor = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = g;
  bad.exemplar_size = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("flat map and matrix views agree on row-major cell order") {
  Rng rng(7);
  const Matrix m = gaussian_matrix(3, 5, rng);
  const Vector flat = matrix_to_map(m);
  REQUIRE(flat.size() == 15);
  for (Index r = 0; r < 3; ++r) {
    for (Index c = 0; c < 5; ++c) {
      CHECK(flat(r * 5 + c) == m(r, c));
      CHECK(FeatureMap::cell_index(r, c, 5) == r * 5 + c);
    }
  }
  const Matrix back = map_to_matrix(flat, 3, 5);
  CHECK(back == m);

  CHECK_THROWS_AS(map_to_matrix(flat, 4, 5), DataError);
  CHECK_THROWS_AS(matrix_to_map(Matrix()), DataError);
}

TEST_CASE("raised-cosine window endpoints, symmetry and separability") {
  const Matrix one = hanning_window(1, 1);
  CHECK(one(0, 0) == 1.0);

  const Index n = 33;
  const Matrix w = hanning_window(n, n);
  CHECK(w(0, 0) == 0.0);  // cos(0) is exact
  CHECK(w((n - 1) / 2, (n - 1) / 2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(w(0, n - 1)) < 1e-15);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      CHECK(w(i, j) == doctest::Approx(w(n - 1 - i, n - 1 - j)).epsilon(1e-12));
    }
  }
  // Separable: w(i, j) = axis(i) * axis(j), checked against the direct formula.
  for (Index i : {Index(3), Index(17), Index(30)}) {
    for (Index j : {Index(0), Index(9), Index(22)}) {
      const double ai = 0.5 * (1.0 - std::cos(2.0 * M_PI * double(i) / double(n - 1)));
      const double aj = 0.5 * (1.0 - std::cos(2.0 * M_PI * double(j) / double(n - 1)));
      CHECK(w(i, j) == doctest::Approx(ai * aj).epsilon(1e-12));
    }
  }
  // The global peak is 1 at the center for an odd-sized window.
  CHECK(w.maxCoeff() <= 1.0 + 1e-12);

  CHECK_THROWS_AS(hanning_window(0, 4), ConfigError);
}

TEST_CASE("window penalty blends scores and is exact at the endpoints") {
  Rng rng(11);
  const Matrix scores = gaussian_matrix(4, 4, rng);
  const Matrix window = hanning_window(4, 4);

  const Matrix at0 = apply_window_penalty(scores, window, 0.0);
  const Matrix at1 = apply_window_penalty(scores, window, 1.0);
  CHECK(at0 == scores);  // bitwise
  CHECK(at1 == window);  // bitwise

  const double mix = 0.49;
  const Matrix blended = apply_window_penalty(scores, window, mix);
  for (Index r = 0; r < 4; ++r) {
    for (Index c = 0; c < 4; ++c) {
      CHECK(blended(r, c) ==
            doctest::Approx((1.0 - mix) * scores(r, c) + mix * window(r, c)).epsilon(1e-15));
    }
  }

  CHECK_THROWS_AS(apply_window_penalty(scores, hanning_window(3, 4), 0.5), DataError);
  CHECK_THROWS_AS(apply_window_penalty(scores, window, 1.5), ConfigError);
  CHECK_THROWS_AS(apply_window_penalty(scores, window, -0.1), ConfigError);
}

TEST_CASE("text correlation scales each channel by one plus the kernel entry") {
  Rng rng(3);
  FeatureMap fm;
  fm.height = 2;
  fm.width = 3;
  fm.data = gaussian_matrix(5, 6, rng);
  const Vector kernel = gaussian_vector(5, rng);

  const FeatureMap out = correlate(fm, kernel);
  REQUIRE(out.data.rows() == 5);
  REQUIRE(out.data.cols() == 6);
  for (Index ch = 0; ch < 5; ++ch) {
    for (Index x = 0; x < 6; ++x) {
      CHECK(out.data(ch, x) == doctest::Approx((1.0 + kernel(ch)) * fm.data(ch, x)).epsilon(1e-15));
    }
  }

  CHECK_THROWS_AS(correlate(fm, Vector::Zero(4)), DataError);
  Vector bad = kernel;
  bad(2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(correlate(fm, bad), DataError);
}

TEST_CASE("prediction head matches a scalar-loop forward pass") {
  Rng rng(19);
  FeatureMap fm;
  fm.height = 2;
  fm.width = 2;
  fm.data = gaussian_matrix(3, 4, rng);
  Rng hr(5);
  const HeadParams head = HeadParams::init(3, hr);
  CHECK_NOTHROW(head.validate());

  const PredictionMaps maps = predict_maps(fm, head);
  REQUIRE(maps.cls.size() == 4);
  REQUIRE(maps.offset.rows() == 2);
  REQUIRE(maps.size.cols() == 4);

  // Independent forward pass with plain loops.
  for (Index x = 0; x < 4; ++x) {
    std::vector<double> h(3);
    for (Index r = 0; r < 3; ++r) h[static_cast<std::size_t>(r)] = fm.data(r, x);
    for (const auto& st : head.stages) {
      std::vector<double> nxt(3, 0.0);
      for (Index r = 0; r < 3; ++r) {
        double acc = 0.0;
        for (Index c = 0; c < 3; ++c) acc += st.weight(r, c) * h[static_cast<std::size_t>(c)];
        acc = acc * st.scale(r) + st.shift(r);
        nxt[static_cast<std::size_t>(r)] = acc > 0.0 ? acc : 0.0;
      }
      h = nxt;
    }
    const auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
    double cls = head.cls_bias(0);
    for (Index c = 0; c < 3; ++c) cls += head.cls_weight(0, c) * h[static_cast<std::size_t>(c)];
    CHECK(maps.cls(x) == doctest::Approx(sig(cls)).epsilon(1e-12));
    for (Index k = 0; k < 2; ++k) {
      double off = head.offset_bias(k);
      double sz = head.size_bias(k);
      for (Index c = 0; c < 3; ++c) {
        off += head.offset_weight(k, c) * h[static_cast<std::size_t>(c)];
        sz += head.size_weight(k, c) * h[static_cast<std::size_t>(c)];
      }
      CHECK(maps.offset(k, x) == doctest::Approx(sig(off)).epsilon(1e-12));
      CHECK(maps.size(k, x) == doctest::Approx(sig(sz)).epsilon(1e-12));
    }
  }

  // Sigmoid outputs stay strictly inside (0, 1).
  CHECK(maps.cls.minCoeff() > 0.0);
  CHECK(maps.cls.maxCoeff() < 1.0);
  CHECK(maps.offset.minCoeff() > 0.0);
  CHECK(maps.size.maxCoeff() < 1.0);

  // Same seed, same head, bit for bit.
  Rng hr2(5);
  const HeadParams head2 = HeadParams::init(3, hr2);
  const PredictionMaps maps2 = predict_maps(fm, head2);
  CHECK(maps2.cls == maps.cls);

  HeadParams broken = head;
  broken.stages[2].scale = Vector::Ones(4);
  CHECK_THROWS_AS(broken.validate(), DataError);
  CHECK_THROWS_AS(HeadParams::init(0, hr), ConfigError);
}

TEST_CASE("state decoding at a hand-worked cell") {
  SearchGeometry g;  // 384 crop, 16x16 grid, stride 24
  PredictionMaps maps;
  maps.height = 16;
  maps.width = 16;
  const Index n = 256;
  maps.cls = Vector::Zero(n);
  maps.offset = Matrix::Constant(2, n, 0.5);
  maps.size = Matrix::Constant(2, n, 0.5);

  const Index best = 5 * 16 + 7;  // row 5, col 7
  maps.cls(best) = 1.0;
  maps.offset(0, best) = 0.25;
  maps.offset(1, best) = 0.75;
  maps.size(0, best) = 0.5;
  maps.size(1, best) = 0.25;

  const BBox box = decode_state(maps, g);
  // center = ((7 + 0.25) * 24, (5 + 0.75) * 24) = (174, 138)
  // extent = (0.5, 0.25) * 384 = (192, 96)
  CHECK(box.cx() == 174.0);
  CHECK(box.cy() == 138.0);
  CHECK(box.w == 192.0);
  CHECK(box.h == 96.0);
  CHECK(box.x == 78.0);
  CHECK(box.y == 90.0);

  // An external score map moves the argmax; offsets still come from the maps.
  Vector blended = Vector::Zero(n);
  blended(0) = 1.0;
  const BBox at0 = decode_state(maps, g, blended);
  CHECK(at0.cx() == 0.5 * 24.0);
  CHECK(at0.cy() == 0.5 * 24.0);

  CHECK_THROWS_AS(decode_state(maps, g, Vector::Zero(5)), DataError);
  PredictionMaps wrong = maps;
  wrong.width = 8;
  CHECK_THROWS_AS(decode_state(wrong, g), DataError);
}

TEST_CASE("feature extraction: shape, unit columns, determinism, seed sensitivity") {
  const auto enc = StubEncoder(16, 99);
  const SearchGeometry g = small_geometry();
  const ImagePatch search = square_frame(32, 32, {6, 10, 8, 8});
  const ImagePatch exemplar = square_frame(16, 16, {4, 4, 8, 8});

  const FeatureMap fm = extract_features(enc, exemplar, search, g, 1234);
  CHECK(fm.height == 4);
  CHECK(fm.width == 4);
  CHECK(fm.channels() == 16);
  CHECK(fm.cells() == 16);
  for (Index x = 0; x < fm.cells(); ++x) {
    CHECK(fm.data.col(x).norm() == doctest::Approx(1.0).epsilon(1e-12));
  }

  const FeatureMap again = extract_features(enc, exemplar, search, g, 1234);
  CHECK(again.data == fm.data);  // bitwise

  const FeatureMap other_seed = extract_features(enc, exemplar, search, g, 1235);
  CHECK((other_seed.data - fm.data).cwiseAbs().maxCoeff() > 1e-6);

  const FeatureMap other_search =
      extract_features(enc, exemplar, square_frame(32, 32, {20, 18, 6, 6}), g, 1234);
  CHECK((other_search.data - fm.data).cwiseAbs().maxCoeff() > 1e-9);

  CHECK_THROWS_AS(extract_features(enc, exemplar, square_frame(31, 32, {6, 10, 8, 8}), g, 1),
                  DataError);
  CHECK_THROWS_AS(extract_features(enc, square_frame(15, 16, {4, 4, 8, 8}), search, g, 1),
                  DataError);
}

TEST_CASE("tracking session follows a bright square and is reproducible") {
  const auto backend = std::make_shared<StubEncoder>(16, 7);
  const BagOfDescriptions bag =
      make_bag(*backend, {"bright square", "dark circle", "striped patch"});
  Rng ar(21);
  const AdapterState adapter = AdapterState::init(16, 2, 0.07, ar);
  Rng hr(22);
  const HeadParams head = HeadParams::init(16, hr);

  TrackerConfig cfg;
  cfg.geometry = small_geometry();
  cfg.window_size = 3;
  cfg.update_interval = 1;
  cfg.feature_seed = 5;

  const auto run = [&]() {
    TrackingSession s(backend, bag, adapter, head, cfg);
    CHECK_FALSE(s.initialized());
    const BBox start{40, 44, 12, 12};
    s.init(square_frame(96, 96, start), start);
    CHECK(s.initialized());
    CHECK(s.current() == start);
    CHECK(is_probability_vector(s.exemplar_token()));

    std::vector<BBox> boxes;
    for (int t = 1; t <= 4; ++t) {
      const BBox gt{40.0 + t, 44.0 + t, 12, 12};
      boxes.push_back(s.track(square_frame(96, 96, gt)));
    }
    CHECK(s.window().frames_seen() == 4);
    return boxes;
  };

  const std::vector<BBox> a = run();
  const std::vector<BBox> b = run();
  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] == b[i]);  // bitwise reproducible end to end
    CHECK(a[i].positive_extent());
    CHECK(a[i].cx() >= 0.0);
    CHECK(a[i].cx() <= 96.0);
    CHECK(a[i].cy() >= 0.0);
    CHECK(a[i].cy() <= 96.0);
    CHECK(std::isfinite(a[i].w));
  }

  TrackingSession untouched(backend, bag, adapter, head, cfg);
  CHECK_THROWS_AS(untouched.track(square_frame(96, 96, {40, 44, 12, 12})), DataError);

  // A weighted strategy with no explicit weights sizes exponential-decay
  // weights to the live window, so it works through warmup too.
  TrackerConfig wcfg = cfg;
  wcfg.strategy = AggregationStrategy::weighted({});
  wcfg.weighted_decay = 0.5;
  TrackingSession ws(backend, bag, adapter, head, wcfg);
  const BBox start{40, 44, 12, 12};
  ws.init(square_frame(96, 96, start), start);
  for (int t = 1; t <= 4; ++t) {
    const BBox gt{40.0 + t, 44.0 + t, 12, 12};
    CHECK(ws.track(square_frame(96, 96, gt)).positive_extent());
  }

  wcfg.weighted_decay = 0.0;
  CHECK_THROWS_AS(wcfg.validate(), ConfigError);
}

TEST_CASE("predicted boxes stay bounded even when the size head saturates") {
  const auto backend = std::make_shared<StubEncoder>(16, 7);
  const BagOfDescriptions bag = make_bag(*backend, {"bright square", "dark circle"});
  Rng ar(21);
  const AdapterState adapter = AdapterState::init(16, 2, 0.07, ar);
  Rng hr(22);
  HeadParams head = HeadParams::init(16, hr);
  // Push the size logits far positive: every frame now claims the target
  // fills the whole search crop. Without the frame clamp, each box would grow
  // by the crop's area factor and the next crop would explode.
  head.size_bias = Vector::Constant(2, 25.0);

  TrackerConfig cfg;
  cfg.geometry = small_geometry();
  cfg.geometry.search_area_factor = 16.0;
  cfg.window_size = 3;
  cfg.update_interval = 1;
  cfg.feature_seed = 5;

  TrackingSession s(backend, bag, adapter, head, cfg);
  const BBox start{40, 44, 12, 12};
  s.init(square_frame(96, 96, start), start);
  for (int t = 1; t <= 8; ++t) {
    const BBox gt{40.0 + t, 44.0 + t, 12, 12};
    const BBox pred = s.track(square_frame(96, 96, gt));
    CHECK(pred.positive_extent());
    CHECK(pred.w <= 96.0);
    CHECK(pred.h <= 96.0);
  }
}

TEST_CASE("preposterous crop requests fail cleanly instead of allocating") {
  const ImagePatch frame = square_frame(64, 64, {20, 20, 10, 10});
  // 16x the frame side is the refusal line; this request is far past it.
  CHECK_THROWS_WITH_AS(
      square_context_crop(frame, BBox{0, 0, 5000, 5000}, 16.0, 32),
      doctest::Contains("out of all proportion"), DataError);
}

TEST_CASE("tracking session rejects mismatched pieces") {
  const auto backend = std::make_shared<StubEncoder>(16, 7);
  const BagOfDescriptions bag = make_bag(*backend, {"a thing"});
  Rng ar(1);
  const AdapterState adapter = AdapterState::init(16, 2, 0.07, ar);
  Rng hr(2);
  const HeadParams head16 = HeadParams::init(16, hr);
  TrackerConfig cfg;
  cfg.geometry = small_geometry();

  CHECK_THROWS_AS(TrackingSession(nullptr, bag, adapter, head16, cfg), ConfigError);
  CHECK_THROWS_AS(TrackingSession(backend, BagOfDescriptions{}, adapter, head16, cfg), DataError);

  Rng hr8(2);
  const HeadParams head8 = HeadParams::init(8, hr8);
  CHECK_THROWS_AS(TrackingSession(backend, bag, adapter, head8, cfg), DataError);

  Rng ar8(1);
  const AdapterState adapter8 = AdapterState::init(8, 2, 0.07, ar8);
  CHECK_THROWS_AS(TrackingSession(backend, bag, adapter8, head16, cfg), DataError);

  TrackerConfig bad = cfg;
  bad.hanning_weight = 2.0;
  CHECK_THROWS_AS(TrackingSession(backend, bag, adapter, head16, bad), ConfigError);

  TrackingSession ok(backend, bag, adapter, head16, cfg);
  CHECK_THROWS_AS(ok.init(square_frame(96, 96, {40, 44, 12, 12}), BBox{10, 10, 0, 5}), DataError);
  CHECK_THROWS_AS(ok.init(square_frame(96, 96, {40, 44, 12, 12}), BBox{500, 500, 10, 10}),
                  DataError);
}
