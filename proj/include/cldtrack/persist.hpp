#pragma once

#include "cldtrack/adapter.hpp"
#include "cldtrack/fusion.hpp"
#include "cldtrack/types.hpp"

#include <filesystem>
#include <string>

namespace cldt {

/// Everything a track or eval run needs to reproduce a trained model: the
/// adapter, the prediction head, the crop geometry and the seeds that shaped
/// the deterministic feature projection and encoder.
struct ParamsFile {
  AdapterState adapter;
  HeadParams head;
  SearchGeometry geometry;
  std::uint64_t feature_seed = 0;
  std::uint64_t encoder_seed = 0;
  Index embed_dim = 0;

  void validate() const;
};

/// Checksummed JSON, written atomically (temp file plus rename).
void save_params(const ParamsFile& params, const std::filesystem::path& path);

/// Strict inverse of save_params: schema, shape and checksum errors all throw.
ParamsFile load_params(const std::filesystem::path& path);

}  // namespace cldt
