#include "cldtrack/persist.hpp"

#include "cldtrack/random.hpp"

#include <json.hpp>

#include <fstream>

namespace cldt {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const Vector& v) {
  json arr = json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Matrix matrix_from_json(const json& j, Index rows, Index cols, const std::string& what) {
  if (!j.is_array() || static_cast<Index>(j.size()) != rows) {
    throw DataError("load_params: " + what + " must be " + std::to_string(rows) + " rows");
  }
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) {
      throw DataError("load_params: " + what + " row " + std::to_string(r) + " must hold " +
                      std::to_string(cols) + " numbers");
    }
    for (Index c = 0; c < cols; ++c) {
      const json& cell = row[static_cast<std::size_t>(c)];
      if (!cell.is_number()) throw DataError("load_params: " + what + " holds a non-number");
      m(r, c) = cell.get<double>();
    }
  }
  if (!m.allFinite()) throw DataError("load_params: " + what + " holds non-finite values");
  return m;
}

Vector vector_from_json(const json& j, Index n, const std::string& what) {
  if (!j.is_array() || static_cast<Index>(j.size()) != n) {
    throw DataError("load_params: " + what + " must hold " + std::to_string(n) + " numbers");
  }
  Vector v(n);
  for (Index i = 0; i < n; ++i) {
    const json& cell = j[static_cast<std::size_t>(i)];
    if (!cell.is_number()) throw DataError("load_params: " + what + " holds a non-number");
    v(i) = cell.get<double>();
  }
  if (!v.allFinite()) throw DataError("load_params: " + what + " holds non-finite values");
  return v;
}

json params_to_json_without_checksum(const ParamsFile& p) {
  json j;
  j["version"] = 1;
  j["embed_dim"] = p.embed_dim;
  j["feature_seed"] = p.feature_seed;
  j["encoder_seed"] = p.encoder_seed;

  j["geometry"] = {{"search_size", p.geometry.search_size},
                   {"exemplar_size", p.geometry.exemplar_size},
                   {"search_area_factor", p.geometry.search_area_factor},
                   {"exemplar_area_factor", p.geometry.exemplar_area_factor},
                   {"grid", p.geometry.grid}};

  j["adapter"] = {{"context", matrix_to_json(p.adapter.context)},
                  {"meta_weight", matrix_to_json(p.adapter.meta_weight)},
                  {"meta_bias", vector_to_json(p.adapter.meta_bias)},
                  {"proj", matrix_to_json(p.adapter.proj)},
                  {"temperature", p.adapter.temperature}};

  json stages = json::array();
  for (const auto& st : p.head.stages) {
    stages.push_back({{"weight", matrix_to_json(st.weight)},
                      {"scale", vector_to_json(st.scale)},
                      {"shift", vector_to_json(st.shift)}});
  }
  j["head"] = {{"stages", std::move(stages)},
               {"cls_weight", matrix_to_json(p.head.cls_weight)},
               {"cls_bias", vector_to_json(p.head.cls_bias)},
               {"offset_weight", matrix_to_json(p.head.offset_weight)},
               {"offset_bias", vector_to_json(p.head.offset_bias)},
               {"size_weight", matrix_to_json(p.head.size_weight)},
               {"size_bias", vector_to_json(p.head.size_bias)}};
  return j;
}

}  // namespace

void ParamsFile::validate() const {
  adapter.validate();
  head.validate();
  geometry.validate();
  if (embed_dim < 1) throw DataError("ParamsFile: embed_dim must be positive");
  if (adapter.dim() != embed_dim) {
    throw DataError("ParamsFile: adapter dimension does not match embed_dim");
  }
  if (head.channels() != embed_dim) {
    throw DataError("ParamsFile: head channels do not match embed_dim");
  }
}

void save_params(const ParamsFile& params, const std::filesystem::path& path) {
  params.validate();
  json j = params_to_json_without_checksum(params);
  j["checksum"] = to_hex16(fnv1a64(j.dump()));

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("save_params: cannot open " + tmp.string() + " for writing");
    out << j.dump(2) << "\n";
    if (!out) throw DataError("save_params: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ParamsFile load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("load_params: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("load_params: invalid JSON in " + path.string() + ": " + e.what());
  }
  for (const char* field :
       {"version", "embed_dim", "feature_seed", "encoder_seed", "geometry", "adapter", "head",
        "checksum"}) {
    if (!j.contains(field)) {
      throw DataError("load_params: " + path.string() + " is missing field '" +
                      std::string(field) + "'");
    }
  }
  if (!j["version"].is_number_integer() || j["version"].get<int>() != 1) {
    throw DataError("load_params: unsupported version in " + path.string());
  }
  const std::string stored = j["checksum"].get<std::string>();
  j.erase("checksum");
  if (to_hex16(fnv1a64(j.dump())) != stored) {
    throw DataError("load_params: checksum mismatch in " + path.string() +
                    " (file corrupted or hand-edited)");
  }

  ParamsFile p;
  p.embed_dim = j["embed_dim"].get<Index>();
  if (p.embed_dim < 1) throw DataError("load_params: embed_dim must be positive");
  p.feature_seed = j["feature_seed"].get<std::uint64_t>();
  p.encoder_seed = j["encoder_seed"].get<std::uint64_t>();

  const json& g = j["geometry"];
  for (const char* field :
       {"search_size", "exemplar_size", "search_area_factor", "exemplar_area_factor", "grid"}) {
    if (!g.contains(field)) {
      throw DataError("load_params: geometry is missing '" + std::string(field) + "'");
    }
  }
  p.geometry.search_size = g["search_size"].get<Index>();
  p.geometry.exemplar_size = g["exemplar_size"].get<Index>();
  p.geometry.search_area_factor = g["search_area_factor"].get<double>();
  p.geometry.exemplar_area_factor = g["exemplar_area_factor"].get<double>();
  p.geometry.grid = g["grid"].get<Index>();

  const Index q = p.embed_dim;
  const json& a = j["adapter"];
  for (const char* field : {"context", "meta_weight", "meta_bias", "proj", "temperature"}) {
    if (!a.contains(field)) {
      throw DataError("load_params: adapter is missing '" + std::string(field) + "'");
    }
  }
  if (!a["context"].is_array()) throw DataError("load_params: adapter context must be an array");
  const Index rows = static_cast<Index>(a["context"].size());
  p.adapter.context = rows == 0 ? Matrix(0, q)
                                : matrix_from_json(a["context"], rows, q, "adapter context");
  p.adapter.meta_weight = matrix_from_json(a["meta_weight"], q, q, "adapter meta_weight");
  p.adapter.meta_bias = vector_from_json(a["meta_bias"], q, "adapter meta_bias");
  p.adapter.proj = matrix_from_json(a["proj"], q, q, "adapter proj");
  p.adapter.temperature = a["temperature"].get<double>();

  const json& h = j["head"];
  for (const char* field : {"stages", "cls_weight", "cls_bias", "offset_weight", "offset_bias",
                            "size_weight", "size_bias"}) {
    if (!h.contains(field)) {
      throw DataError("load_params: head is missing '" + std::string(field) + "'");
    }
  }
  if (!h["stages"].is_array() || h["stages"].size() != 4) {
    throw DataError("load_params: head must hold exactly 4 stages");
  }
  for (std::size_t k = 0; k < 4; ++k) {
    const json& st = h["stages"][k];
    const std::string where = "head stage " + std::to_string(k);
    for (const char* field : {"weight", "scale", "shift"}) {
      if (!st.contains(field)) {
        throw DataError("load_params: " + where + " is missing '" + std::string(field) + "'");
      }
    }
    p.head.stages[k].weight = matrix_from_json(st["weight"], q, q, where + " weight");
    p.head.stages[k].scale = vector_from_json(st["scale"], q, where + " scale");
    p.head.stages[k].shift = vector_from_json(st["shift"], q, where + " shift");
  }
  p.head.cls_weight = matrix_from_json(h["cls_weight"], 1, q, "head cls_weight");
  p.head.cls_bias = vector_from_json(h["cls_bias"], 1, "head cls_bias");
  p.head.offset_weight = matrix_from_json(h["offset_weight"], 2, q, "head offset_weight");
  p.head.offset_bias = vector_from_json(h["offset_bias"], 2, "head offset_bias");
  p.head.size_weight = matrix_from_json(h["size_weight"], 2, q, "head size_weight");
  p.head.size_bias = vector_from_json(h["size_bias"], 2, "head size_bias");

  p.validate();
  return p;
}

}  // namespace cldt
