#include "doctest.h"

#include "cldtrack/persist.hpp"
#include "cldtrack/random.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;
using namespace cldt;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "cldtrack_test_persist" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ParamsFile sample_params(Index dim = 6) {
  Rng rng(404);
  ParamsFile p;
  p.adapter = AdapterState::init(dim, 3, 0.07, rng);
  p.head = HeadParams::init(dim, rng);
  p.geometry.search_size = 32;
  p.geometry.exemplar_size = 16;
  p.geometry.grid = 4;
  p.feature_seed = 99;
  p.encoder_seed = 7;
  p.embed_dim = dim;
  return p;
}

}  // namespace

TEST_CASE("params round trip bitwise") {
  fs::path dir = scratch_dir("roundtrip");
  ParamsFile p = sample_params();
  fs::path file = dir / "params.json";
  save_params(p, file);
  REQUIRE(fs::exists(file));
  CHECK_FALSE(fs::exists(dir / "params.json.tmp"));

  ParamsFile q = load_params(file);
  CHECK(q.embed_dim == p.embed_dim);
  CHECK(q.feature_seed == p.feature_seed);
  CHECK(q.encoder_seed == p.encoder_seed);
  CHECK(q.geometry.search_size == p.geometry.search_size);
  CHECK(q.geometry.exemplar_size == p.geometry.exemplar_size);
  CHECK(q.geometry.grid == p.geometry.grid);
  CHECK(q.geometry.search_area_factor == p.geometry.search_area_factor);
  CHECK(q.geometry.exemplar_area_factor == p.geometry.exemplar_area_factor);
  CHECK(q.adapter.temperature == p.adapter.temperature);
  CHECK(q.adapter.context == p.adapter.context);
  CHECK(q.adapter.meta_weight == p.adapter.meta_weight);
  CHECK(q.adapter.meta_bias == p.adapter.meta_bias);
  CHECK(q.adapter.proj == p.adapter.proj);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(q.head.stages[k].weight == p.head.stages[k].weight);
    CHECK(q.head.stages[k].scale == p.head.stages[k].scale);
    CHECK(q.head.stages[k].shift == p.head.stages[k].shift);
  }
  CHECK(q.head.cls_weight == p.head.cls_weight);
  CHECK(q.head.cls_bias == p.head.cls_bias);
  CHECK(q.head.offset_weight == p.head.offset_weight);
  CHECK(q.head.offset_bias == p.head.offset_bias);
  CHECK(q.head.size_weight == p.head.size_weight);
  CHECK(q.head.size_bias == p.head.size_bias);

  // Saving the reloaded struct reproduces the file byte for byte.
  fs::path again = dir / "again.json";
  save_params(q, again);
  std::ifstream a(file, std::ios::binary), b(again, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
}

TEST_CASE("tampered file fails checksum") {
  fs::path dir = scratch_dir("tamper");
  fs::path file = dir / "params.json";
  save_params(sample_params(), file);

  std::ifstream in(file, std::ios::binary);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  auto pos = text.find("0.07");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 4, "0.08");
  std::ofstream out(file, std::ios::binary);
  out << text;
  out.close();

  CHECK_THROWS_WITH_AS(load_params(file), doctest::Contains("checksum mismatch"), DataError);
}

TEST_CASE("missing file and missing fields") {
  fs::path dir = scratch_dir("missing");
  CHECK_THROWS_AS(load_params(dir / "nope.json"), ConfigError);

  fs::path file = dir / "params.json";
  save_params(sample_params(), file);
  std::ifstream in(file, std::ios::binary);
  nlohmann::json j;
  in >> j;
  in.close();

  nlohmann::json broken = j;
  broken.erase("adapter");
  std::ofstream out(file, std::ios::binary);
  out << broken.dump(2) << "\n";
  out.close();
  CHECK_THROWS_WITH_AS(load_params(file), doctest::Contains("missing field 'adapter'"), DataError);
}

TEST_CASE("wrong shapes and versions are rejected") {
  fs::path dir = scratch_dir("shapes");
  fs::path file = dir / "params.json";
  save_params(sample_params(), file);

  std::ifstream in(file, std::ios::binary);
  nlohmann::json j;
  in >> j;
  in.close();

  auto rewrite = [&](nlohmann::json doc) {
    doc.erase("checksum");
    doc["checksum"] = to_hex16(fnv1a64(doc.dump()));
    std::ofstream out(file, std::ios::binary);
    out << doc.dump(2) << "\n";
  };

  nlohmann::json bad = j;
  bad["adapter"]["meta_bias"].push_back(0.0);
  rewrite(bad);
  CHECK_THROWS_WITH_AS(load_params(file), doctest::Contains("meta_bias"), DataError);

  bad = j;
  bad["head"]["stages"].erase(3);
  rewrite(bad);
  CHECK_THROWS_WITH_AS(load_params(file), doctest::Contains("4 stages"), DataError);

  bad = j;
  bad["version"] = 2;
  rewrite(bad);
  CHECK_THROWS_WITH_AS(load_params(file), doctest::Contains("version"), DataError);

  bad = j;
  bad["adapter"]["proj"][0][0] = "oops";
  rewrite(bad);
  CHECK_THROWS_WITH_AS(load_params(file), doctest::Contains("non-number"), DataError);
}

TEST_CASE("validate catches inconsistent dimensions") {
  ParamsFile p = sample_params(6);
  p.embed_dim = 5;
  CHECK_THROWS_AS(p.validate(), DataError);

  ParamsFile ok = sample_params(6);
  CHECK_NOTHROW(ok.validate());
}
