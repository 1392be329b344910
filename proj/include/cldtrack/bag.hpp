#pragma once

#include "cldtrack/encoders.hpp"
#include "cldtrack/image.hpp"
#include "cldtrack/lexicon.hpp"
#include "cldtrack/random.hpp"
#include "cldtrack/types.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cldt {

enum class EntryKind { Class, Attribute, Generated, SemanticContext };
enum class Provenance { DictionaryMatch, Service, Synonym, Perturbation, TaskPhrase, Concept };

std::string to_string(EntryKind kind);
std::string to_string(Provenance provenance);
EntryKind entry_kind_from_string(const std::string& s);
Provenance provenance_from_string(const std::string& s);

/// One textual cue describing the target, with its pre-computed embedding and
/// similarity to the first-frame target feature.
struct DescriptionEntry {
  EntryKind kind = EntryKind::Class;
  std::string text;
  Provenance provenance = Provenance::DictionaryMatch;
  Vector embedding;
  double sim_to_image = 0;
};

/// The complete description set for one tracked target. Entry order is
/// deterministic: class, attributes, generated description, semantic context.
struct BagOfDescriptions {
  std::vector<DescriptionEntry> entries;
  std::string frame_digest;
  std::map<std::string, std::string> config;

  Index size() const { return static_cast<Index>(entries.size()); }
  /// Entries stacked as rows, one per description.
  Matrix embedding_matrix() const;
  std::vector<std::string> texts() const;
};

/// Word list, one entry per line, '#' lines are comments. Entries are
/// pre-encoded once so matching against thousands of them stays cheap.
struct Dictionary {
  enum class Kind { Class, Attribute };

  Kind kind = Kind::Class;
  std::vector<std::string> entries;
  Matrix embeddings;  // one row per entry, unit length

  static Dictionary load(const std::filesystem::path& path, Kind kind);
  void encode(const EncoderBackend& backend);
  bool encoded() const {
    return embeddings.rows() == static_cast<Index>(entries.size()) && embeddings.cols() > 0;
  }
};

/// Best dictionary entry for an image feature: (index, cosine score). Ties
/// resolve to the lowest index.
std::pair<Index, double> match_dictionary(const Vector& image_feat, const Dictionary& dict);

/// Top k entries by cosine score, best first; score ties resolve to the lower
/// index. k is capped at the dictionary size.
std::vector<std::pair<Index, double>> match_top_k(const Vector& image_feat,
                                                  const Dictionary& dict, int k);

/// Replaces each token, where an alpha-probability draw fires and the lexicon
/// knows the token, by one of its synonyms. `replaced`, when given, receives
/// one flag per token marking the actual replacements.
std::vector<std::string> perturb(const std::vector<std::string>& tokens, double alpha,
                                 const Lexicon& lex, Rng& rng,
                                 std::vector<bool>* replaced = nullptr);

struct BagConfig {
  double tau_val = 0.8;
  double tau_syn = 0.5;
  double alpha = 0.3;
  int n_syn = 10;
  int n_task = 10;
  int top_k_attributes = 4;
  int regen_rounds = 2;
  std::uint64_t seed = 1234;
  std::filesystem::path exclusion_file;  // optional; one text per line

  std::string description_prompt =
      "Provide a detailed description of the scene, focusing on the visual features, "
      "shape, texture, color, and distinguishing characteristics of the object enclosed "
      "within the red bounding box. Highlight any unique attributes that set it apart "
      "from similar objects.";
  // {n} and {class} are substituted before the call.
  std::string task_prompt =
      "Create a {n} unique and detailed descriptive phrases or scenarios within a "
      "{class}. Each should vividly capture distinctive actions, characteristics, or "
      "typical contexts, emphasizing variety and creativity while maintaining relevance "
      "to the theme.";
  // {description} is substituted before the call.
  std::string concept_prompt =
      "Based on the description \"{description}\", provide a concise class name (in five "
      "words or fewer) that best represents its category.";
};

struct DiscardRecord {
  std::string text;
  double sim = 0;
};

struct BagBuildReport {
  std::vector<DiscardRecord> discarded;
  std::vector<std::string> warnings;
  int regenerated_accepted = 0;  // rejected entries salvaged by regeneration
  int excluded = 0;              // entries removed by the exclusion list
};

struct EnrichmentResult {
  std::vector<DescriptionEntry> entries;  // text + kind + provenance only
  std::vector<std::string> prompts;       // per entry; non-empty iff regenerable
  std::vector<std::string> warnings;
};

/// Expands (class name, attributes, generated description) into the semantic
/// context block: synonyms, a perturbed description, task phrases and a
/// concise concept name.
EnrichmentResult enrich_semantic_context(const std::string& class_name,
                                         const std::vector<std::string>& attributes,
                                         const std::string& description,
                                         const GenerativeClient& client,
                                         const ImagePatch& first_frame, const Lexicon& lex,
                                         const BagConfig& cfg, Rng& rng);

/// Keeps entries whose similarity to the image feature reaches `tau_val`
/// (inclusive), refreshing each survivor's stored similarity. Rejecting every
/// entry is an error that reports the best rejected similarity.
BagOfDescriptions validate_bag(const BagOfDescriptions& bag, const Vector& image_feat,
                               double tau_val, BagBuildReport* report = nullptr);

/// Full first-frame pipeline: dictionary matching, generated description,
/// semantic enrichment, pre-encoding, similarity validation with bounded
/// regeneration of rejected service entries, and exclusion-list filtering.
/// `first_frame.target` must hold the target box.
BagOfDescriptions build_bag(const ImagePatch& first_frame, const Dictionary& classes,
                            const Dictionary& attributes, const GenerativeClient& client,
                            const Lexicon& lex, const EncoderBackend& backend,
                            const BagConfig& cfg, BagBuildReport* report = nullptr);

/// JSON persistence with a content checksum. Writes are atomic (temp file +
/// rename); loads verify the checksum, the schema version and every
/// kind/provenance tag, and reject dimension-inconsistent embeddings.
void save_bag(const BagOfDescriptions& bag, const std::filesystem::path& path);
BagOfDescriptions load_bag(const std::filesystem::path& path);

}  // namespace cldt
