#include "cldtrack/encoders.hpp"

#include "cldtrack/core.hpp"
#include "cldtrack/random.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <semaphore>
#include <set>
#include <sstream>
#include <thread>

namespace cldt {

using nlohmann::json;

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Vector encode_text(const EncoderBackend& backend, const std::string& text) {
  Vector v = backend.encode_text(text);
  if (v.size() != backend.dim())
    throw DataError("encode_text: backend returned dimension " + std::to_string(v.size()) +
                    ", expected " + std::to_string(backend.dim()));
  return v;
}

Vector encode_image(const EncoderBackend& backend, const ImagePatch& patch) {
  Vector v = backend.encode_image(patch);
  if (v.size() != backend.dim())
    throw DataError("encode_image: backend returned dimension " + std::to_string(v.size()) +
                    ", expected " + std::to_string(backend.dim()));
  return v;
}

namespace {

constexpr Index kPoolSide = 8;            // pooled grid per channel
constexpr Index kStatsPerChannel = kPoolSide * kPoolSide + 2;  // grid + mean + std

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

StubEncoder::StubEncoder(Index dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim < 4) throw ConfigError("StubEncoder: embedding dimension must be at least 4");
  token_salt_ = derive_seed(seed, "token");
  proj1_ = image_projection(1);
  proj3_ = image_projection(3);
}

std::string StubEncoder::identity() const {
  std::ostringstream os;
  os << "stub(dim=" << dim_ << ",seed=" << seed_ << ")";
  return os.str();
}

Vector StubEncoder::token_vector(const std::string& token) const {
  // Three signed components per token, one strongly dominant, so mixtures of
  // mostly-disjoint token sets behave like scaled indicator vectors.
  static const double kWeight[3] = {std::sqrt(0.90), std::sqrt(0.06), std::sqrt(0.04)};
  const std::uint64_t h = splitmix64(fnv1a64(token) ^ token_salt_);
  Vector v = Vector::Zero(dim_);
  Index used[3] = {-1, -1, -1};
  int placed = 0;
  std::uint64_t s = h;
  while (placed < 3) {
    s = splitmix64(s);
    const Index d = static_cast<Index>(s % static_cast<std::uint64_t>(dim_));
    bool duplicate = false;
    for (int i = 0; i < placed; ++i)
      if (used[i] == d) duplicate = true;
    if (duplicate) continue;
    used[placed] = d;
    const double sign = ((s >> 32) & 1u) ? 1.0 : -1.0;
    v(d) += sign * kWeight[placed];
    ++placed;
  }
  return v;
}

Vector StubEncoder::encode_text(const std::string& text) const {
  const std::vector<std::string> tokens = tokenize(text);
  if (tokens.empty())
    throw DataError("encode_text: input has no alphanumeric tokens: '" + text + "'");
  const std::set<std::string> unique(tokens.begin(), tokens.end());
  Vector sum = Vector::Zero(dim_);
  for (const std::string& tok : unique) sum += token_vector(tok);
  if (sum.norm() == 0.0) {
    // Astronomically unlikely sign cancellation; fall back to a basis vector
    // so the output is still deterministic and unit length.
    sum(static_cast<Index>(fnv1a64(text) % static_cast<std::uint64_t>(dim_))) = 1.0;
  }
  return l2_normalize(sum);
}

Matrix StubEncoder::image_projection(Index channels) const {
  const Index stats = channels * kStatsPerChannel + 1;
  Rng rng(derive_seed(seed_, "image_proj:" + std::to_string(channels)));
  return gaussian_matrix(dim_, stats, rng, 1.0 / std::sqrt(static_cast<double>(stats)));
}

Vector StubEncoder::encode_image(const ImagePatch& patch) const {
  validate_patch(patch);
  const Index ch = patch.channel_count();
  const ImagePatch pooled = resize_bilinear(patch, kPoolSide, kPoolSide);

  Vector stats(ch * kStatsPerChannel + 1);
  Index at = 0;
  for (Index k = 0; k < ch; ++k) {
    const Matrix& m = pooled.channels[static_cast<std::size_t>(k)];
    for (Index r = 0; r < kPoolSide; ++r)
      for (Index c = 0; c < kPoolSide; ++c) stats(at++) = m(r, c);
    const double mean = m.mean();
    stats(at++) = mean;
    stats(at++) = std::sqrt((m.array() - mean).square().mean());
  }
  stats(at++) = 1.0;  // constant term keeps uniform images off the zero vector

  const Matrix& proj = ch == 1 ? proj1_ : (ch == 3 ? proj3_ : image_projection(ch));
  return l2_normalize(proj * stats);
}

// ---------------------------------------------------------------------------
// Generative client

struct GenerativeClient::Gate {
  explicit Gate(int n) : sem(n) {}
  std::counting_semaphore<1024> sem;
};

GenerativeClient::GenerativeClient(std::shared_ptr<Transport> transport)
    : GenerativeClient(std::move(transport), Options{}) {}

GenerativeClient::GenerativeClient(std::shared_ptr<Transport> transport, Options options)
    : transport_(std::move(transport)), options_(options) {
  if (!transport_) throw ConfigError("GenerativeClient: transport must not be null");
  if (options_.max_attempts < 1)
    throw ConfigError("GenerativeClient: max_attempts must be at least 1");
  if (options_.concurrency < 1 || options_.concurrency > 1024)
    throw ConfigError("GenerativeClient: concurrency must be in [1, 1024]");
  if (options_.backoff_ms < 0)
    throw ConfigError("GenerativeClient: backoff_ms must be non-negative");
  gate_ = std::make_shared<Gate>(options_.concurrency);
}

ImagePatch GenerativeClient::prepare(const ImagePatch& patch) const {
  validate_patch(patch);
  ImagePatch wire = patch;
  if (options_.draw_target_box && wire.target) {
    std::vector<double> color(static_cast<std::size_t>(wire.channel_count()), 0.0);
    color[0] = 1.0;  // red on RGB, white on grayscale
    draw_box(wire, *wire.target, color, 2);
  }
  return wire;
}

std::string GenerativeClient::prepared_digest(const ImagePatch& patch) const {
  return patch_digest_hex(prepare(patch));
}

std::string GenerativeClient::generate(const ImagePatch& patch,
                                       const std::string& prompt) const {
  if (prompt.empty()) throw DataError("generate: prompt must not be empty");
  const ImagePatch wire = prepare(patch);

  json request;
  if (options_.send_pixels) {
    const Index h = wire.height();
    const Index w = wire.width();
    const Index ch = wire.channel_count();
    std::vector<unsigned char> bytes;
    bytes.reserve(static_cast<std::size_t>(h * w * ch));
    for (Index r = 0; r < h; ++r)
      for (Index c = 0; c < w; ++c)
        for (Index k = 0; k < ch; ++k)
          bytes.push_back(static_cast<unsigned char>(
              std::lround(std::clamp(wire.channels[static_cast<std::size_t>(k)](r, c),
                                     0.0, 1.0) *
                          255.0)));
    request["image"] = base64_encode(bytes);
    request["image_encoding"] = "base64_rgb8";
    request["width"] = w;
    request["height"] = h;
    request["channels"] = ch;
  } else {
    request["image"] = patch_digest_hex(wire);
    request["image_encoding"] = "digest";
  }
  request["prompt"] = prompt;
  const std::string payload = request.dump();

  std::string last_error = "no attempts made";
  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    if (attempt > 1 && options_.backoff_ms > 0) {
      const auto delay = std::chrono::milliseconds(
          static_cast<long long>(options_.backoff_ms) << (attempt - 2));
      std::this_thread::sleep_for(delay);
    }
    try {
      std::string response;
      {
        gate_->sem.acquire();
        struct Releaser {
          std::counting_semaphore<1024>& s;
          ~Releaser() { s.release(); }
        } releaser{gate_->sem};
        response = transport_->send(payload);
      }
      json parsed = json::parse(response);
      if (!parsed.contains("text") || !parsed["text"].is_string())
        throw DataError("response is missing a string 'text' field");
      std::string text = parsed["text"].get<std::string>();
      while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
      if (text.empty()) throw DataError("response text is empty");
      return text;
    } catch (const std::exception& e) {
      last_error = e.what();
    }
  }
  throw ServiceError("generative service failed after " +
                         std::to_string(options_.max_attempts) +
                         " attempts; last error: " + last_error,
                     options_.max_attempts);
}

std::string generate_description(const GenerativeClient& client, const ImagePatch& patch,
                                 const std::string& prompt) {
  return client.generate(patch, prompt);
}

// ---------------------------------------------------------------------------
// Transports

CannedTransport::CannedTransport(std::filesystem::path responses_dir)
    : dir_(std::move(responses_dir)) {
  if (!dir_.empty() && !std::filesystem::is_directory(dir_))
    throw ConfigError("CannedTransport: responses directory does not exist: " +
                      dir_.string());
}

std::string CannedTransport::prompt_hash(const std::string& prompt) {
  char buf[9];
  std::snprintf(buf, sizeof(buf), "%08x",
                static_cast<unsigned>(fnv1a64(prompt) & 0xffffffffu));
  return buf;
}

std::string CannedTransport::send(const std::string& request_json) {
  json request = json::parse(request_json);
  std::string key;
  if (request.value("image_encoding", "digest") == "digest")
    key = request.at("image").get<std::string>();
  else
    key = hex16(fnv1a64(request.at("image").get<std::string>()));
  const std::string prompt = request.at("prompt").get<std::string>();
  const std::string ph = prompt_hash(prompt);

  if (!dir_.empty()) {
    for (const std::string& name : {key + "-" + ph + ".txt", key + ".txt"}) {
      const auto path = dir_ / name;
      if (std::filesystem::exists(path)) {
        std::ifstream in(path);
        std::ostringstream content;
        content << in.rdbuf();
        std::string text = content.str();
        while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back())))
          text.pop_back();
        return json{{"text", text}}.dump();
      }
    }
  }
  // Deterministic fallback: short enough to survive concise-name limits,
  // distinct per (image, prompt) pair.
  const std::string text = "textured object " + key.substr(0, 8) + " " + ph;
  return json{{"text", text}}.dump();
}

std::string FlakyTransport::send(const std::string& request_json) {
  ++attempts_;
  if (remaining_ > 0) {
    --remaining_;
    throw std::runtime_error("injected transient transport failure");
  }
  return inner_->send(request_json);
}

// ---------------------------------------------------------------------------
// Base64 (RFC 4648, with padding)

static const char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::vector<unsigned char>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 3 <= bytes.size()) {
    const unsigned v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out.push_back(kB64Alphabet[(v >> 18) & 63]);
    out.push_back(kB64Alphabet[(v >> 12) & 63]);
    out.push_back(kB64Alphabet[(v >> 6) & 63]);
    out.push_back(kB64Alphabet[v & 63]);
    i += 3;
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const unsigned v = bytes[i] << 16;
    out.push_back(kB64Alphabet[(v >> 18) & 63]);
    out.push_back(kB64Alphabet[(v >> 12) & 63]);
    out += "==";
  } else if (rest == 2) {
    const unsigned v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out.push_back(kB64Alphabet[(v >> 18) & 63]);
    out.push_back(kB64Alphabet[(v >> 12) & 63]);
    out.push_back(kB64Alphabet[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<unsigned char> out;
  unsigned buffer = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    const int v = value_of(c);
    if (v < 0) throw DataError("base64_decode: invalid character in input");
    buffer = (buffer << 6) | static_cast<unsigned>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<unsigned char>((buffer >> bits) & 0xff));
    }
  }
  return out;
}

}  // namespace cldt
