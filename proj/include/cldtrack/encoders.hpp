#pragma once

#include "cldtrack/image.hpp"
#include "cldtrack/types.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace cldt {

/// Splits text into lowercase alphanumeric tokens.
std::vector<std::string> tokenize(const std::string& text);

/// Joint text/image embedding backend. Implementations must be deterministic
/// and safely shareable across threads after construction.
class EncoderBackend {
 public:
  virtual ~EncoderBackend() = default;
  virtual Index dim() const = 0;
  virtual std::string identity() const = 0;
  virtual Vector encode_text(const std::string& text) const = 0;
  virtual Vector encode_image(const ImagePatch& patch) const = 0;
};

/// Validating front doors used by the rest of the pipeline.
Vector encode_text(const EncoderBackend& backend, const std::string& text);
Vector encode_image(const EncoderBackend& backend, const ImagePatch& patch);

/// Offline stand-in for a CLIP-style encoder. Text embeds as a normalized
/// mixture of per-token signed sparse vectors (set semantics: repeated tokens
/// count once); images embed via pooled patch statistics pushed through a
/// seeded random projection. Both land on the unit sphere in R^dim and are
/// bit-reproducible for a given (dim, seed).
class StubEncoder final : public EncoderBackend {
 public:
  StubEncoder(Index dim, std::uint64_t seed);

  Index dim() const override { return dim_; }
  std::string identity() const override;
  Vector encode_text(const std::string& text) const override;
  Vector encode_image(const ImagePatch& patch) const override;

 private:
  Vector token_vector(const std::string& token) const;
  Matrix image_projection(Index channels) const;

  Index dim_;
  std::uint64_t seed_;
  std::uint64_t token_salt_;
  Matrix proj1_;  // prebuilt projections for the common channel counts
  Matrix proj3_;
};

/// Raw wire to a generative vision-language service. `send` takes the request
/// JSON and returns the response JSON; any exception counts as a failed
/// attempt and is retried by the client up to its budget.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::string send(const std::string& request_json) = 0;
};

/// Terminal failure of a generate call; carries how many attempts were made.
struct ServiceError : DataError {
  ServiceError(const std::string& what, int attempts_made)
      : DataError(what), attempts(attempts_made) {}
  int attempts;
};

/// Client for image-conditioned text generation. The transport is injected so
/// tests and offline runs swap in mocks; retry, backoff, concurrency limiting
/// and target-box drawing live here, identically for every transport.
class GenerativeClient {
 public:
  struct Options {
    int max_attempts = 3;       // total tries per request, including the first
    int concurrency = 4;        // max in-flight transport sends
    int backoff_ms = 25;        // doubles after each failed attempt
    bool draw_target_box = true;
    bool send_pixels = false;   // false: send the image digest only
  };

  explicit GenerativeClient(std::shared_ptr<Transport> transport);
  GenerativeClient(std::shared_ptr<Transport> transport, Options options);

  /// One image + prompt in, one description out.
  std::string generate(const ImagePatch& patch, const std::string& prompt) const;

  /// Digest of the image exactly as it would go on the wire (after any
  /// target-box drawing). Canned response files are keyed by this.
  std::string prepared_digest(const ImagePatch& patch) const;

  const Options& options() const { return options_; }

 private:
  ImagePatch prepare(const ImagePatch& patch) const;

  std::shared_ptr<Transport> transport_;
  Options options_;
  struct Gate;
  std::shared_ptr<Gate> gate_;
};

std::string generate_description(const GenerativeClient& client, const ImagePatch& patch,
                                 const std::string& prompt);

/// Offline transport. Looks up canned responses in `responses_dir` by
/// "<digest>-<prompt_hash>.txt" then "<digest>.txt"; with no directory (or no
/// file) it falls back to a deterministic synthesized description.
class CannedTransport final : public Transport {
 public:
  explicit CannedTransport(std::filesystem::path responses_dir = {});
  std::string send(const std::string& request_json) override;

  static std::string prompt_hash(const std::string& prompt);

 private:
  std::filesystem::path dir_;
};

/// Test transport: fails the first `failures` sends, then delegates.
class FlakyTransport final : public Transport {
 public:
  FlakyTransport(std::shared_ptr<Transport> inner, int failures)
      : inner_(std::move(inner)), remaining_(failures) {}
  std::string send(const std::string& request_json) override;
  int sends_attempted() const { return attempts_; }

 private:
  std::shared_ptr<Transport> inner_;
  int remaining_;
  int attempts_ = 0;
};

std::string base64_encode(const std::vector<unsigned char>& bytes);
std::vector<unsigned char> base64_decode(const std::string& text);

}  // namespace cldt
