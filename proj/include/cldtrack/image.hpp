#pragma once

#include "cldtrack/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cldt {

/// In-memory image: one H x W matrix per channel, values in [0, 1].
/// `target` optionally marks a box of interest in pixel coordinates.
struct ImagePatch {
  std::vector<Matrix> channels;
  std::optional<BBox> target;

  Index height() const { return channels.empty() ? 0 : channels.front().rows(); }
  Index width() const { return channels.empty() ? 0 : channels.front().cols(); }
  Index channel_count() const { return static_cast<Index>(channels.size()); }
  bool empty() const { return channels.empty() || height() == 0 || width() == 0; }

  static ImagePatch filled(Index h, Index w, Index ch, double value);
};

/// Checks positive dimensions, consistent channel shapes, pixel range and
/// (when present) that the target box lies inside the image.
void validate_patch(const ImagePatch& patch);

/// Content digest over dimensions and raw pixel bytes. Identical pixels give
/// identical digests; used to key cached generative responses.
std::uint64_t patch_digest(const ImagePatch& patch);
std::string patch_digest_hex(const ImagePatch& patch);

/// Extracts `region` (rounded to whole pixels); areas outside the source are
/// zero-filled. The result carries no target box.
ImagePatch crop(const ImagePatch& patch, const BBox& region);

/// Bilinear resample to `h` x `w`.
ImagePatch resize_bilinear(const ImagePatch& patch, Index h, Index w);

/// Draws the box outline (clipped to the image) in the given per-channel
/// color, `thickness` pixels wide, directly into the pixels.
void draw_box(ImagePatch& patch, const BBox& box, const std::vector<double>& color,
              int thickness = 2);

/// Binary PPM/PGM. 3-channel images write P6, 1-channel P5, 8 bits per value.
void write_ppm(const std::filesystem::path& path, const ImagePatch& patch);
ImagePatch read_ppm(const std::filesystem::path& path);

}  // namespace cldt
