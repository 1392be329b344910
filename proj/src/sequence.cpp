#include "cldtrack/sequence.hpp"

#include "cldtrack/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace cldt {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

double parse_field(const std::string& field, const std::string& file, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (used != field.size() || !std::isfinite(v)) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw DataError(file + " line " + std::to_string(line_no) + ": cannot parse number '" +
                    field + "'");
  }
}

}  // namespace

std::vector<BBox> load_box_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::vector<BBox> boxes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream row(t);
    while (std::getline(row, field, ',')) fields.push_back(trim(field));
    if (fields.size() != 4) {
      throw DataError(path.filename().string() + " line " + std::to_string(line_no) +
                      ": expected x,y,w,h but found " + std::to_string(fields.size()) +
                      " fields");
    }
    BBox b;
    b.x = parse_field(fields[0], path.filename().string(), line_no);
    b.y = parse_field(fields[1], path.filename().string(), line_no);
    b.w = parse_field(fields[2], path.filename().string(), line_no);
    b.h = parse_field(fields[3], path.filename().string(), line_no);
    boxes.push_back(b);
  }
  if (boxes.empty()) throw DataError(path.filename().string() + ": no boxes");
  return boxes;
}

void save_box_file(const std::vector<BBox>& boxes, const fs::path& path) {
  if (boxes.empty()) throw DataError("save_box_file: no boxes");
  std::ofstream out(path);
  if (!out) throw DataError("save_box_file: cannot open " + path.string() + " for writing");
  for (const BBox& b : boxes) {
    char row[128];
    std::snprintf(row, sizeof(row), "%.4f,%.4f,%.4f,%.4f\n", b.x, b.y, b.w, b.h);
    out << row;
  }
  if (!out) throw DataError("save_box_file: write failed for " + path.string());
}

namespace {

std::vector<bool> read_absent(const fs::path& path, std::size_t expected) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<bool> absent;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t == "0") {
      absent.push_back(false);
    } else if (t == "1") {
      absent.push_back(true);
    } else {
      throw DataError("absent.txt line " + std::to_string(line_no) +
                      ": expected 0 or 1, found '" + t + "'");
    }
  }
  if (absent.size() != expected) {
    throw DataError("absent.txt has " + std::to_string(absent.size()) + " flags for " +
                    std::to_string(expected) + " frames");
  }
  return absent;
}

}  // namespace

ImagePatch Sequence::load_frame(std::size_t index) const {
  if (index >= frame_paths.size()) {
    throw DataError("Sequence: frame " + std::to_string(index) + " out of range");
  }
  return read_ppm(frame_paths[index]);
}

Sequence load_sequence(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw ConfigError("load_sequence: " + dir.string() + " is not a directory");
  }
  const fs::path gt_path = dir / "groundtruth.txt";
  if (!fs::exists(gt_path)) {
    throw DataError("load_sequence: missing " + gt_path.string());
  }
  const fs::path img_dir = dir / "img";
  if (!fs::is_directory(img_dir)) {
    throw DataError("load_sequence: missing img directory under " + dir.string());
  }

  Sequence seq;
  seq.name = dir.filename().string();
  seq.groundtruth = load_box_file(gt_path);

  for (const auto& entry : fs::directory_iterator(img_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") {
      seq.frame_paths.push_back(entry.path());
    }
  }
  std::sort(seq.frame_paths.begin(), seq.frame_paths.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  if (seq.frame_paths.empty()) {
    throw DataError("load_sequence: no .ppm frames under " + img_dir.string());
  }
  if (seq.frame_paths.size() != seq.groundtruth.size()) {
    throw DataError("load_sequence: " + std::to_string(seq.frame_paths.size()) +
                    " frames but " + std::to_string(seq.groundtruth.size()) +
                    " ground-truth boxes");
  }

  const fs::path absent_path = dir / "absent.txt";
  if (fs::exists(absent_path)) {
    seq.absent = read_absent(absent_path, seq.groundtruth.size());
  } else {
    seq.absent.assign(seq.groundtruth.size(), false);
  }

  const fs::path nlp_path = dir / "nlp.txt";
  if (fs::exists(nlp_path)) {
    std::ifstream in(nlp_path);
    std::string line;
    std::getline(in, line);
    seq.language = trim(line);
  }
  return seq;
}

void SyntheticConfig::validate() const {
  if (frames < 2) throw ConfigError("SyntheticConfig: need at least two frames");
  if (height < 32 || width < 32) throw ConfigError("SyntheticConfig: scene must be at least 32x32");
  if (!(base_size >= 4.0)) throw ConfigError("SyntheticConfig: base_size must be at least 4");
  if (!(size_amplitude >= 0.0)) throw ConfigError("SyntheticConfig: negative size amplitude");
  const double max_size = base_size + size_amplitude;
  if (max_size > 0.35 * static_cast<double>(std::min(height, width))) {
    throw ConfigError("SyntheticConfig: square too large for the scene");
  }
}

SyntheticSequence make_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  const Index h = cfg.height, w = cfg.width;

  // Static background noise, one value per pixel and channel.
  Rng bg_rng(derive_seed(cfg.seed, "background"));
  std::vector<Matrix> background(3);
  for (auto& ch : background) {
    ch.resize(h, w);
    for (Index r = 0; r < h; ++r) {
      for (Index c = 0; c < w; ++c) ch(r, c) = bg_rng.uniform(0.05, 0.30);
    }
  }

  // Texture tile the square carries with it.
  constexpr Index kTile = 64;
  Rng tex_rng(derive_seed(cfg.seed, "texture"));
  Matrix tile(kTile, kTile);
  for (Index r = 0; r < kTile; ++r) {
    for (Index c = 0; c < kTile; ++c) tile(r, c) = tex_rng.uniform(0.70, 0.95);
  }
  const double tint[3] = {1.00, 0.85, 0.70};

  SyntheticSequence out;
  const double two_pi = 2.0 * M_PI;
  for (Index t = 0; t < cfg.frames; ++t) {
    const double phase = two_pi * static_cast<double>(t) / static_cast<double>(cfg.frames);
    const double cx = 0.5 * w + 0.30 * w * std::sin(phase + 0.7);
    const double cy = 0.5 * h + 0.30 * h * std::sin(2.0 * phase);
    const double size = cfg.base_size + cfg.size_amplitude * std::sin(3.0 * phase + 0.3);

    // Rasterize on integer pixel edges and use the rasterized box as ground
    // truth so the labels match the pixels exactly.
    const Index side = static_cast<Index>(std::llround(size));
    const Index left = static_cast<Index>(std::llround(cx - 0.5 * static_cast<double>(side)));
    const Index top = static_cast<Index>(std::llround(cy - 0.5 * static_cast<double>(side)));

    ImagePatch frame;
    frame.channels = background;
    for (Index r = std::max(Index(0), top); r < std::min(h, top + side); ++r) {
      for (Index c = std::max(Index(0), left); c < std::min(w, left + side); ++c) {
        const double tex = tile(((r - top) % kTile + kTile) % kTile,
                                ((c - left) % kTile + kTile) % kTile);
        for (int ch = 0; ch < 3; ++ch) frame.channels[static_cast<std::size_t>(ch)](r, c) = tex * tint[ch];
      }
    }
    out.frames.push_back(std::move(frame));
    out.boxes.push_back(BBox{static_cast<double>(left), static_cast<double>(top),
                             static_cast<double>(side), static_cast<double>(side)});
  }
  return out;
}

void write_synthetic_dataset(const fs::path& dir, const SyntheticConfig& cfg) {
  const SyntheticSequence seq = make_synthetic(cfg);
  fs::create_directories(dir / "img");

  std::ofstream gt(dir / "groundtruth.txt");
  if (!gt) throw DataError("write_synthetic_dataset: cannot write under " + dir.string());
  char row[160];
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%04zu.ppm", i + 1);
    write_ppm(dir / "img" / name, seq.frames[i]);
    const BBox& b = seq.boxes[i];
    std::snprintf(row, sizeof(row), "%.4f,%.4f,%.4f,%.4f\n", b.x, b.y, b.w, b.h);
    gt << row;
  }

  std::ofstream nlp(dir / "nlp.txt");
  nlp << "a bright textured square gliding over dark noise\n";
}

}  // namespace cldt
