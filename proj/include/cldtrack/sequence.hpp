#pragma once

#include "cldtrack/image.hpp"
#include "cldtrack/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace cldt {

/// One tracking sequence on disk: frames under img/, one ground-truth box per
/// frame, an optional absent flag per frame and an optional language line.
struct Sequence {
  std::string name;
  std::vector<std::filesystem::path> frame_paths;
  std::vector<BBox> groundtruth;
  std::vector<bool> absent;  // same length as frames; all false when absent.txt is missing
  std::string language;      // first line of nlp.txt, empty when missing

  std::size_t size() const { return frame_paths.size(); }
  ImagePatch load_frame(std::size_t index) const;
};

/// Reads a sequence directory:
///   groundtruth.txt   one "x,y,w,h" line per frame (required)
///   img/*.ppm         frames, sorted by filename (required)
///   absent.txt        one 0/1 line per frame (optional)
///   nlp.txt           language description on the first line (optional)
/// Counts must agree; parse errors name the file and line.
Sequence load_sequence(const std::filesystem::path& dir);

/// Box-list exchange format shared by ground truth and predictions: one
/// "x,y,w,h" line per frame, four decimals on write, blank lines ignored on
/// read. Parse errors name the file and line.
std::vector<BBox> load_box_file(const std::filesystem::path& path);
void save_box_file(const std::vector<BBox>& boxes, const std::filesystem::path& path);

/// Synthetic moving-square scene: a static noise background with a brighter
/// textured square sweeping a Lissajous path while its size breathes.
struct SyntheticConfig {
  Index frames = 64;
  Index height = 128;
  Index width = 128;
  std::uint64_t seed = 1234;
  double base_size = 20.0;
  double size_amplitude = 5.0;

  void validate() const;
};

struct SyntheticSequence {
  std::vector<ImagePatch> frames;
  std::vector<BBox> boxes;
};

SyntheticSequence make_synthetic(const SyntheticConfig& cfg);

/// Materializes the synthetic scene as a sequence directory (img/*.ppm,
/// groundtruth.txt, nlp.txt) loadable by load_sequence.
void write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticConfig& cfg);

}  // namespace cldt
