#include "cldtrack/image.hpp"

#include "cldtrack/random.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace cldt {

ImagePatch ImagePatch::filled(Index h, Index w, Index ch, double value) {
  if (h <= 0 || w <= 0 || ch <= 0)
    throw DataError("ImagePatch::filled: dimensions must be positive");
  ImagePatch p;
  p.channels.assign(static_cast<std::size_t>(ch), Matrix::Constant(h, w, value));
  return p;
}

void validate_patch(const ImagePatch& patch) {
  if (patch.empty()) throw DataError("image patch is empty");
  const Index h = patch.height();
  const Index w = patch.width();
  for (const Matrix& ch : patch.channels) {
    if (ch.rows() != h || ch.cols() != w)
      throw DataError("image patch has inconsistent channel shapes");
    if (!ch.allFinite() || ch.minCoeff() < 0.0 || ch.maxCoeff() > 1.0)
      throw DataError("image patch has pixel values outside [0, 1]");
  }
  if (patch.target) {
    const BBox& b = *patch.target;
    if (!b.positive_extent() || b.x < 0 || b.y < 0 || b.x2() > static_cast<double>(w) ||
        b.y2() > static_cast<double>(h))
      throw DataError("image patch target box lies outside the image");
  }
}

std::uint64_t patch_digest(const ImagePatch& patch) {
  std::uint64_t h = fnv1a64("patch");
  const std::int64_t dims[3] = {patch.height(), patch.width(), patch.channel_count()};
  h = fnv1a64(dims, sizeof(dims), h);
  for (const Matrix& ch : patch.channels)
    h = fnv1a64(ch.data(), sizeof(double) * static_cast<std::size_t>(ch.size()), h);
  return h;
}

std::string patch_digest_hex(const ImagePatch& patch) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(patch_digest(patch)));
  return std::string(buf);
}

ImagePatch crop(const ImagePatch& patch, const BBox& region) {
  if (patch.empty()) throw DataError("crop: empty source patch");
  if (!region.positive_extent()) throw DataError("crop: region must have positive extent");
  const Index x0 = static_cast<Index>(std::llround(region.x));
  const Index y0 = static_cast<Index>(std::llround(region.y));
  const Index cw = std::max<Index>(1, static_cast<Index>(std::llround(region.w)));
  const Index ch = std::max<Index>(1, static_cast<Index>(std::llround(region.h)));
  const Index sw = patch.width();
  const Index sh = patch.height();

  ImagePatch out;
  out.channels.reserve(patch.channels.size());
  for (const Matrix& src : patch.channels) {
    Matrix dst = Matrix::Zero(ch, cw);
    const Index r0 = std::max<Index>(0, -y0);
    const Index r1 = std::min<Index>(ch, sh - y0);
    const Index c0 = std::max<Index>(0, -x0);
    const Index c1 = std::min<Index>(cw, sw - x0);
    if (r1 > r0 && c1 > c0)
      dst.block(r0, c0, r1 - r0, c1 - c0) = src.block(y0 + r0, x0 + c0, r1 - r0, c1 - c0);
    out.channels.push_back(std::move(dst));
  }
  return out;
}

ImagePatch resize_bilinear(const ImagePatch& patch, Index h, Index w) {
  if (patch.empty()) throw DataError("resize_bilinear: empty source patch");
  if (h <= 0 || w <= 0) throw DataError("resize_bilinear: target dimensions must be positive");
  const Index sh = patch.height();
  const Index sw = patch.width();
  const double sy = static_cast<double>(sh) / static_cast<double>(h);
  const double sx = static_cast<double>(sw) / static_cast<double>(w);

  ImagePatch out;
  out.channels.reserve(patch.channels.size());
  for (const Matrix& src : patch.channels) {
    Matrix dst(h, w);
    for (Index r = 0; r < h; ++r) {
      const double fy = std::clamp((static_cast<double>(r) + 0.5) * sy - 0.5, 0.0,
                                   static_cast<double>(sh - 1));
      const Index y0 = static_cast<Index>(std::floor(fy));
      const Index y1 = std::min(y0 + 1, sh - 1);
      const double wy = fy - static_cast<double>(y0);
      for (Index c = 0; c < w; ++c) {
        const double fx = std::clamp((static_cast<double>(c) + 0.5) * sx - 0.5, 0.0,
                                     static_cast<double>(sw - 1));
        const Index x0 = static_cast<Index>(std::floor(fx));
        const Index x1 = std::min(x0 + 1, sw - 1);
        const double wx = fx - static_cast<double>(x0);
        const double top = (1.0 - wx) * src(y0, x0) + wx * src(y0, x1);
        const double bot = (1.0 - wx) * src(y1, x0) + wx * src(y1, x1);
        dst(r, c) = (1.0 - wy) * top + wy * bot;
      }
    }
    out.channels.push_back(std::move(dst));
  }
  return out;
}

void draw_box(ImagePatch& patch, const BBox& box, const std::vector<double>& color,
              int thickness) {
  if (patch.empty()) throw DataError("draw_box: empty patch");
  if (color.size() != patch.channels.size())
    throw DataError("draw_box: color channel count does not match the image");
  if (thickness < 1) throw DataError("draw_box: thickness must be at least 1");
  const Index h = patch.height();
  const Index w = patch.width();
  const Index x0 = static_cast<Index>(std::llround(box.x));
  const Index y0 = static_cast<Index>(std::llround(box.y));
  const Index x1 = static_cast<Index>(std::llround(box.x2())) - 1;
  const Index y1 = static_cast<Index>(std::llround(box.y2())) - 1;

  auto put = [&](Index r, Index c) {
    if (r < 0 || r >= h || c < 0 || c >= w) return;
    for (std::size_t k = 0; k < patch.channels.size(); ++k)
      patch.channels[k](r, c) = std::clamp(color[k], 0.0, 1.0);
  };
  for (int t = 0; t < thickness; ++t) {
    for (Index c = x0 - t; c <= x1 + t; ++c) {
      put(y0 - t, c);
      put(y1 + t, c);
    }
    for (Index r = y0 - t; r <= y1 + t; ++r) {
      put(r, x0 - t);
      put(r, x1 + t);
    }
  }
}

void write_ppm(const std::filesystem::path& path, const ImagePatch& patch) {
  validate_patch(patch);
  const Index ch = patch.channel_count();
  if (ch != 1 && ch != 3)
    throw DataError("write_ppm: only 1- or 3-channel images are supported");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("write_ppm: cannot open " + path.string() + " for writing");
  const Index h = patch.height();
  const Index w = patch.width();
  out << (ch == 3 ? "P6" : "P5") << "\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(w * ch));
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c)
      for (Index k = 0; k < ch; ++k) {
        const double v = std::clamp(patch.channels[static_cast<std::size_t>(k)](r, c), 0.0, 1.0);
        row[static_cast<std::size_t>(c * ch + k)] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw DataError("write_ppm: write failed for " + path.string());
}

namespace {

int next_header_token(std::istream& in) {
  // Skips whitespace and '#' comment lines inside the PPM header.
  while (in) {
    int c = in.peek();
    if (c == EOF) break;
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int value = -1;
  in >> value;
  return value;
}

}  // namespace

ImagePatch read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("read_ppm: cannot open " + path.string());
  std::string magic;
  in >> magic;
  Index ch = 0;
  if (magic == "P6")
    ch = 3;
  else if (magic == "P5")
    ch = 1;
  else
    throw DataError("read_ppm: " + path.string() + " is not a binary PPM/PGM (got '" +
                    magic + "')");
  const int w = next_header_token(in);
  const int h = next_header_token(in);
  const int maxval = next_header_token(in);
  if (w <= 0 || h <= 0) throw DataError("read_ppm: bad dimensions in " + path.string());
  if (maxval != 255)
    throw DataError("read_ppm: only 8-bit images are supported (" + path.string() + ")");
  in.get();  // single whitespace after maxval

  ImagePatch p;
  p.channels.assign(static_cast<std::size_t>(ch), Matrix(h, w));
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * static_cast<std::size_t>(ch));
  for (Index r = 0; r < h; ++r) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (!in) throw DataError("read_ppm: truncated pixel data in " + path.string());
    for (Index c = 0; c < w; ++c)
      for (Index k = 0; k < ch; ++k)
        p.channels[static_cast<std::size_t>(k)](r, c) =
            static_cast<double>(row[static_cast<std::size_t>(c * ch + k)]) / 255.0;
  }
  return p;
}

}  // namespace cldt
