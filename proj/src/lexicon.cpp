#include "cldtrack/lexicon.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

namespace cldt {

using nlohmann::json;

namespace {

std::string lowercase(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

JsonLexicon::JsonLexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("lexicon: cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError("lexicon: invalid JSON in " + path.string() + ": " + e.what());
  }
  if (!doc.is_object())
    throw DataError("lexicon: top level of " + path.string() + " must be an object");
  for (const auto& [key, value] : doc.items()) {
    const std::string word = lowercase(key);
    if (table_.count(word))
      throw DataError("lexicon: duplicate word '" + word + "' in " + path.string());
    if (!value.is_array())
      throw DataError("lexicon: entry for '" + key + "' must be an array");
    std::vector<SynonymHit> hits;
    for (const auto& item : value) {
      if (!item.is_object() || !item.contains("synonym") || !item.contains("score") ||
          !item["synonym"].is_string() || !item["score"].is_number())
        throw DataError("lexicon: entries for '" + key +
                        "' must be objects with string 'synonym' and numeric 'score'");
      SynonymHit hit{item["synonym"].get<std::string>(), item["score"].get<double>()};
      if (!std::isfinite(hit.score) || hit.score < 0.0 || hit.score > 1.0)
        throw DataError("lexicon: score for '" + key + "' -> '" + hit.word +
                        "' must be in [0, 1]");
      hits.push_back(std::move(hit));
    }
    table_.emplace(word, std::move(hits));
  }
}

std::vector<SynonymHit> JsonLexicon::lookup(const std::string& word) const {
  auto it = table_.find(lowercase(word));
  return it == table_.end() ? std::vector<SynonymHit>{} : it->second;
}

std::vector<SynonymHit> MapLexicon::lookup(const std::string& word) const {
  auto it = table_.find(lowercase(word));
  return it == table_.end() ? std::vector<SynonymHit>{} : it->second;
}

std::vector<std::string> retrieve_synonyms(const std::string& word, const Lexicon& lex,
                                           double tau_syn, int n) {
  if (n < 1) throw ConfigError("retrieve_synonyms: n must be at least 1");
  std::vector<SynonymHit> hits = lex.lookup(word);
  hits.erase(std::remove_if(hits.begin(), hits.end(),
                            [tau_syn](const SynonymHit& h) { return h.score < tau_syn; }),
             hits.end());
  std::stable_sort(hits.begin(), hits.end(),
                   [](const SynonymHit& a, const SynonymHit& b) { return a.score > b.score; });
  if (hits.size() > static_cast<std::size_t>(n)) hits.resize(static_cast<std::size_t>(n));
  std::vector<std::string> out;
  out.reserve(hits.size());
  for (auto& h : hits) out.push_back(std::move(h.word));
  if (out.empty()) out.push_back(word);  // no qualifying synonym: the word stands in
  return out;
}

}  // namespace cldt
