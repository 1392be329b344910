#pragma once

#include "cldtrack/types.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cldt {

struct SynonymHit {
  std::string word;
  double score = 0;
};

/// Synonym source. Lookups are case-insensitive; results come back in the
/// stored order with their relatedness scores.
class Lexicon {
 public:
  virtual ~Lexicon() = default;
  virtual std::vector<SynonymHit> lookup(const std::string& word) const = 0;
};

/// File-backed lexicon. Schema: { "word": [ {"synonym": "...", "score": 0.8},
/// ... ], ... } with scores in [0, 1].
class JsonLexicon final : public Lexicon {
 public:
  explicit JsonLexicon(const std::filesystem::path& path);
  std::vector<SynonymHit> lookup(const std::string& word) const override;
  std::size_t size() const { return table_.size(); }

 private:
  std::map<std::string, std::vector<SynonymHit>> table_;
};

class EmptyLexicon final : public Lexicon {
 public:
  std::vector<SynonymHit> lookup(const std::string&) const override { return {}; }
};

/// In-memory lexicon for tests and synthetic runs.
class MapLexicon final : public Lexicon {
 public:
  explicit MapLexicon(std::map<std::string, std::vector<SynonymHit>> table)
      : table_(std::move(table)) {}
  std::vector<SynonymHit> lookup(const std::string& word) const override;

 private:
  std::map<std::string, std::vector<SynonymHit>> table_;
};

/// Synonyms of `word` scoring at least `tau_syn`, best first (ties keep
/// stored order), truncated to the first `n`. With no qualifying synonym the
/// word itself is returned, so the result is never empty.
std::vector<std::string> retrieve_synonyms(const std::string& word, const Lexicon& lex,
                                           double tau_syn, int n);

}  // namespace cldt
