#include "cldtrack/bag.hpp"

#include "cldtrack/core.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace cldt {

using nlohmann::json;

std::string to_string(EntryKind kind) {
  switch (kind) {
    case EntryKind::Class: return "class";
    case EntryKind::Attribute: return "attribute";
    case EntryKind::Generated: return "generated";
    case EntryKind::SemanticContext: return "semantic_context";
  }
  throw DataError("to_string: invalid entry kind value");
}

std::string to_string(Provenance provenance) {
  switch (provenance) {
    case Provenance::DictionaryMatch: return "dictionary-match";
    case Provenance::Service: return "service";
    case Provenance::Synonym: return "synonym";
    case Provenance::Perturbation: return "perturbation";
    case Provenance::TaskPhrase: return "task-phrase";
    case Provenance::Concept: return "concept";
  }
  throw DataError("to_string: invalid provenance value");
}

EntryKind entry_kind_from_string(const std::string& s) {
  if (s == "class") return EntryKind::Class;
  if (s == "attribute") return EntryKind::Attribute;
  if (s == "generated") return EntryKind::Generated;
  if (s == "semantic_context") return EntryKind::SemanticContext;
  throw DataError("unknown entry kind '" + s + "'");
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "dictionary-match") return Provenance::DictionaryMatch;
  if (s == "service") return Provenance::Service;
  if (s == "synonym") return Provenance::Synonym;
  if (s == "perturbation") return Provenance::Perturbation;
  if (s == "task-phrase") return Provenance::TaskPhrase;
  if (s == "concept") return Provenance::Concept;
  throw DataError("unknown provenance '" + s + "'");
}

Matrix BagOfDescriptions::embedding_matrix() const {
  if (entries.empty()) throw DataError("bag has no entries");
  const Index q = entries.front().embedding.size();
  if (q == 0) throw DataError("bag entry 0 has an empty embedding");
  Matrix m(size(), q);
  for (Index i = 0; i < size(); ++i) {
    const Vector& e = entries[static_cast<std::size_t>(i)].embedding;
    if (e.size() != q)
      throw DataError("bag entry " + std::to_string(i) + " has embedding dimension " +
                      std::to_string(e.size()) + ", expected " + std::to_string(q));
    m.row(i) = e.transpose();
  }
  return m;
}

std::vector<std::string> BagOfDescriptions::texts() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.text);
  return out;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += sep;
    out += p;
  }
  return out;
}

std::string substitute(std::string text, const std::string& placeholder,
                       const std::string& value) {
  std::size_t at = 0;
  while ((at = text.find(placeholder, at)) != std::string::npos) {
    text.replace(at, placeholder.size(), value);
    at += value.size();
  }
  return text;
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> whitespace_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> words;
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

std::set<std::string> load_exclusions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("exclusion list: cannot open " + path.string());
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    out.insert(t);
  }
  return out;
}

void check_bag_config(const BagConfig& cfg) {
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0))
    throw ConfigError("bag config: alpha must be in [0, 1]");
  if (cfg.n_syn < 1) throw ConfigError("bag config: n_syn must be at least 1");
  if (cfg.n_task < 0) throw ConfigError("bag config: n_task must be non-negative");
  if (cfg.top_k_attributes < 1)
    throw ConfigError("bag config: top_k_attributes must be at least 1");
  if (cfg.regen_rounds < 0) throw ConfigError("bag config: regen_rounds must be non-negative");
  if (!std::isfinite(cfg.tau_val) || !std::isfinite(cfg.tau_syn))
    throw ConfigError("bag config: thresholds must be finite");
}

}  // namespace

Dictionary Dictionary::load(const std::filesystem::path& path, Kind kind) {
  std::ifstream in(path);
  if (!in) throw ConfigError("dictionary: cannot open " + path.string());
  Dictionary dict;
  dict.kind = kind;
  std::map<std::string, int> first_seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string entry = trim(line);
    if (entry.empty() || entry[0] == '#') continue;
    auto it = first_seen.find(entry);
    if (it != first_seen.end())
      throw DataError("dictionary: duplicate entry '" + entry + "' at line " +
                      std::to_string(line_no) + " (first seen at line " +
                      std::to_string(it->second) + ") in " + path.string());
    first_seen.emplace(entry, line_no);
    dict.entries.push_back(entry);
  }
  if (dict.entries.empty())
    throw DataError("dictionary: " + path.string() + " contains no entries");
  return dict;
}

void Dictionary::encode(const EncoderBackend& backend) {
  embeddings.resize(static_cast<Index>(entries.size()), backend.dim());
  for (Index i = 0; i < static_cast<Index>(entries.size()); ++i)
    embeddings.row(i) = encode_text(backend, entries[static_cast<std::size_t>(i)]).transpose();
}

std::pair<Index, double> match_dictionary(const Vector& image_feat, const Dictionary& dict) {
  if (!dict.encoded()) throw DataError("match_dictionary: dictionary is not encoded");
  if (image_feat.size() != dict.embeddings.cols())
    throw DataError("match_dictionary: feature dimension " + std::to_string(image_feat.size()) +
                    " does not match dictionary dimension " +
                    std::to_string(dict.embeddings.cols()));
  const Vector f = l2_normalize(image_feat);
  const Vector scores = dict.embeddings * f;
  const Index best = argmax(scores);
  return {best, scores(best)};
}

std::vector<std::pair<Index, double>> match_top_k(const Vector& image_feat,
                                                  const Dictionary& dict, int k) {
  if (k < 1) throw ConfigError("match_top_k: k must be at least 1");
  if (!dict.encoded()) throw DataError("match_top_k: dictionary is not encoded");
  if (image_feat.size() != dict.embeddings.cols())
    throw DataError("match_top_k: feature dimension " + std::to_string(image_feat.size()) +
                    " does not match dictionary dimension " +
                    std::to_string(dict.embeddings.cols()));
  const Vector f = l2_normalize(image_feat);
  const Vector scores = dict.embeddings * f;
  std::vector<Index> order(static_cast<std::size_t>(scores.size()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Index>(i);
  std::sort(order.begin(), order.end(), [&scores](Index a, Index b) {
    if (scores(a) != scores(b)) return scores(a) > scores(b);
    return a < b;
  });
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
  std::vector<std::pair<Index, double>> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.emplace_back(order[i], scores(order[i]));
  return out;
}

std::vector<std::string> perturb(const std::vector<std::string>& tokens, double alpha,
                                 const Lexicon& lex, Rng& rng,
                                 std::vector<bool>* replaced) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("perturb: alpha must be in [0, 1]");
  std::vector<std::string> out;
  out.reserve(tokens.size());
  if (replaced) replaced->assign(tokens.size(), false);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const bool fire = rng.uniform() < alpha;
    if (fire) {
      const std::vector<SynonymHit> hits = lex.lookup(tokens[i]);
      if (!hits.empty()) {
        out.push_back(hits[rng.uniform_index(hits.size())].word);
        if (replaced) (*replaced)[i] = true;
        continue;
      }
    }
    out.push_back(tokens[i]);
  }
  return out;
}

EnrichmentResult enrich_semantic_context(const std::string& class_name,
                                         const std::vector<std::string>& attributes,
                                         const std::string& description,
                                         const GenerativeClient& client,
                                         const ImagePatch& first_frame, const Lexicon& lex,
                                         const BagConfig& cfg, Rng& rng) {
  check_bag_config(cfg);
  EnrichmentResult res;
  auto add = [&res](Provenance p, std::string text, std::string prompt = "") {
    DescriptionEntry e;
    e.kind = EntryKind::SemanticContext;
    e.provenance = p;
    e.text = std::move(text);
    res.entries.push_back(std::move(e));
    res.prompts.push_back(std::move(prompt));
  };

  // Synonyms of the matched class; the class name itself stands in when the
  // lexicon offers nothing above threshold.
  for (const std::string& syn : retrieve_synonyms(class_name, lex, cfg.tau_syn, cfg.n_syn))
    add(Provenance::Synonym, syn);

  // One perturbed copy of the target's full textual cue line.
  {
    const std::string cue_line =
        class_name + " " + join(attributes, " ") + " " + description;
    const std::vector<std::string> perturbed =
        perturb(tokenize(cue_line), cfg.alpha, lex, rng, nullptr);
    add(Provenance::Perturbation, join(perturbed, " "));
  }

  // Task-specific phrases, one call per phrase so each stays an independent
  // bag entry.
  std::string task_base = substitute(cfg.task_prompt, "{class}", class_name);
  task_base = substitute(task_base, "{n}", std::to_string(cfg.n_task));
  for (int i = 1; i <= cfg.n_task; ++i) {
    const std::string prompt = task_base + " (phrase " + std::to_string(i) + " of " +
                               std::to_string(cfg.n_task) + ")";
    add(Provenance::TaskPhrase, generate_description(client, first_frame, prompt), prompt);
  }

  // Concise concept name distilled from the generated description.
  const std::string concept_prompt =
      substitute(cfg.concept_prompt, "{description}", description);
  std::string concept_name = generate_description(client, first_frame, concept_prompt);
  const std::vector<std::string> words = whitespace_words(concept_name);
  if (words.size() > 5) {
    res.warnings.push_back("concept name exceeded five words and was truncated: '" +
                           concept_name + "'");
    concept_name = join({words.begin(), words.begin() + 5}, " ");
  }
  add(Provenance::Concept, concept_name, concept_prompt);
  return res;
}

namespace {

struct ValidationOutcome {
  std::vector<DescriptionEntry> kept;
  double best_rejected = -2.0;
  Index total = 0;
};

void reject(ValidationOutcome& v, BagBuildReport* report, const DescriptionEntry& e) {
  if (report) report->discarded.push_back({e.text, e.sim_to_image});
  v.best_rejected = std::max(v.best_rejected, e.sim_to_image);
}

[[noreturn]] void throw_all_rejected(const std::string& who, const ValidationOutcome& v,
                                     double tau_val) {
  throw DataError(who + ": all " + std::to_string(v.total) +
                  " entries fell below tau_val=" + format_double(tau_val) +
                  "; best rejected similarity " + format_double(v.best_rejected));
}

}  // namespace

BagOfDescriptions validate_bag(const BagOfDescriptions& bag, const Vector& image_feat,
                               double tau_val, BagBuildReport* report) {
  if (bag.entries.empty()) throw DataError("validate_bag: bag has no entries");
  ValidationOutcome v;
  v.total = bag.size();
  for (const DescriptionEntry& entry : bag.entries) {
    DescriptionEntry e = entry;
    e.sim_to_image = cosine_sim(image_feat, e.embedding);
    if (e.sim_to_image >= tau_val)
      v.kept.push_back(std::move(e));
    else
      reject(v, report, e);
  }
  if (v.kept.empty()) throw_all_rejected("validate_bag", v, tau_val);
  BagOfDescriptions out;
  out.entries = std::move(v.kept);
  out.frame_digest = bag.frame_digest;
  out.config = bag.config;
  return out;
}

BagOfDescriptions build_bag(const ImagePatch& first_frame, const Dictionary& classes,
                            const Dictionary& attributes, const GenerativeClient& client,
                            const Lexicon& lex, const EncoderBackend& backend,
                            const BagConfig& cfg, BagBuildReport* report) {
  check_bag_config(cfg);
  validate_patch(first_frame);
  if (!first_frame.target)
    throw DataError("build_bag: the first frame must carry the target box");
  if (classes.kind != Dictionary::Kind::Class ||
      attributes.kind != Dictionary::Kind::Attribute)
    throw ConfigError("build_bag: class/attribute dictionaries are swapped");
  if (!classes.encoded() || !attributes.encoded())
    throw DataError("build_bag: dictionaries must be encoded first");

  BagBuildReport local_report;
  BagBuildReport& rep = report ? *report : local_report;

  // Target appearance feature from the tight first-frame crop.
  const ImagePatch target_crop = crop(first_frame, *first_frame.target);
  const Vector target_feat = encode_image(backend, target_crop);

  const auto [class_idx, class_score] = match_dictionary(target_feat, classes);
  const std::string class_name = classes.entries[static_cast<std::size_t>(class_idx)];

  const auto attr_hits = match_top_k(target_feat, attributes, cfg.top_k_attributes);
  std::vector<std::string> attr_names;
  attr_names.reserve(attr_hits.size());
  for (const auto& [idx, score] : attr_hits)
    attr_names.push_back(attributes.entries[static_cast<std::size_t>(idx)]);

  const std::string description =
      generate_description(client, first_frame, cfg.description_prompt);

  Rng rng(derive_seed(cfg.seed, "bag"));
  EnrichmentResult enriched = enrich_semantic_context(class_name, attr_names, description,
                                                      client, first_frame, lex, cfg, rng);
  for (auto& w : enriched.warnings) rep.warnings.push_back(std::move(w));

  // Candidate assembly in contract order: class, attributes, generated
  // description, semantic context. Prompts are kept alongside so rejected
  // service entries can be regenerated.
  struct Candidate {
    DescriptionEntry entry;
    std::string prompt;
  };
  std::vector<Candidate> candidates;
  candidates.push_back({{EntryKind::Class, class_name, Provenance::DictionaryMatch, {}, 0.0},
                        ""});
  for (const std::string& name : attr_names)
    candidates.push_back(
        {{EntryKind::Attribute, name, Provenance::DictionaryMatch, {}, 0.0}, ""});
  candidates.push_back(
      {{EntryKind::Generated, description, Provenance::Service, {}, 0.0},
       cfg.description_prompt});
  for (std::size_t i = 0; i < enriched.entries.size(); ++i)
    candidates.push_back({std::move(enriched.entries[i]), std::move(enriched.prompts[i])});

  // Pre-encode every candidate once; similarity checks and the tracker both
  // reuse these embeddings.
  for (Candidate& c : candidates) {
    c.entry.embedding = encode_text(backend, c.entry.text);
    c.entry.sim_to_image = cosine_sim(target_feat, c.entry.embedding);
  }

  ValidationOutcome v;
  v.total = static_cast<Index>(candidates.size());
  for (Candidate& c : candidates) {
    if (c.entry.sim_to_image >= cfg.tau_val) {
      v.kept.push_back(std::move(c.entry));
      continue;
    }
    reject(v, &rep, c.entry);
    if (c.prompt.empty()) continue;
    for (int round = 1; round <= cfg.regen_rounds; ++round) {
      DescriptionEntry retry = c.entry;
      retry.text = generate_description(
          client, first_frame,
          c.prompt + " (regeneration round " + std::to_string(round) + ")");
      retry.embedding = encode_text(backend, retry.text);
      retry.sim_to_image = cosine_sim(target_feat, retry.embedding);
      if (retry.sim_to_image >= cfg.tau_val) {
        v.kept.push_back(std::move(retry));
        ++rep.regenerated_accepted;
        break;
      }
      reject(v, &rep, retry);
    }
  }
  if (v.kept.empty()) throw_all_rejected("build_bag", v, cfg.tau_val);

  if (!cfg.exclusion_file.empty()) {
    const std::set<std::string> excluded = load_exclusions(cfg.exclusion_file);
    std::vector<DescriptionEntry> filtered;
    for (auto& e : v.kept) {
      if (excluded.count(e.text))
        ++rep.excluded;
      else
        filtered.push_back(std::move(e));
    }
    if (filtered.empty())
      throw DataError("build_bag: the exclusion list removed every validated entry");
    v.kept = std::move(filtered);
  }

  BagOfDescriptions bag;
  bag.entries = std::move(v.kept);
  bag.frame_digest = patch_digest_hex(first_frame);
  bag.config = {
      {"alpha", format_double(cfg.alpha)},
      {"attribute_count", std::to_string(attributes.entries.size())},
      {"backend", backend.identity()},
      {"class_count", std::to_string(classes.entries.size())},
      {"embed_dim", std::to_string(backend.dim())},
      {"n_syn", std::to_string(cfg.n_syn)},
      {"n_task", std::to_string(cfg.n_task)},
      {"regen_rounds", std::to_string(cfg.regen_rounds)},
      {"seed", std::to_string(cfg.seed)},
      {"tau_syn", format_double(cfg.tau_syn)},
      {"tau_val", format_double(cfg.tau_val)},
      {"top_k_attributes", std::to_string(cfg.top_k_attributes)},
  };
  return bag;
}

namespace {

json bag_to_json_without_checksum(const BagOfDescriptions& bag) {
  json j;
  j["version"] = 1;
  j["frame_digest"] = bag.frame_digest;
  j["config"] = bag.config;
  json entries = json::array();
  for (const DescriptionEntry& e : bag.entries) {
    json je;
    je["kind"] = to_string(e.kind);
    je["text"] = e.text;
    je["provenance"] = to_string(e.provenance);
    je["sim_to_image"] = e.sim_to_image;
    je["embedding"] = std::vector<double>(e.embedding.data(),
                                          e.embedding.data() + e.embedding.size());
    entries.push_back(std::move(je));
  }
  j["entries"] = std::move(entries);
  return j;
}

}  // namespace

void save_bag(const BagOfDescriptions& bag, const std::filesystem::path& path) {
  if (bag.entries.empty()) throw DataError("save_bag: refusing to save an empty bag");
  bag.embedding_matrix();  // consistent dimensions or throw
  json j = bag_to_json_without_checksum(bag);
  j["checksum"] = to_hex16(fnv1a64(j.dump()));

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("save_bag: cannot open " + tmp.string() + " for writing");
    out << j.dump(2) << "\n";
    if (!out) throw DataError("save_bag: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

BagOfDescriptions load_bag(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("load_bag: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("load_bag: invalid JSON in " + path.string() + ": " + e.what());
  }
  for (const char* field : {"version", "frame_digest", "config", "entries", "checksum"})
    if (!j.contains(field))
      throw DataError("load_bag: " + path.string() + " is missing field '" +
                      std::string(field) + "'");
  if (!j["version"].is_number_integer() || j["version"].get<int>() != 1)
    throw DataError("load_bag: unsupported bag version in " + path.string());

  const std::string stored_checksum = j["checksum"].get<std::string>();
  j.erase("checksum");
  if (to_hex16(fnv1a64(j.dump())) != stored_checksum)
    throw DataError("load_bag: checksum mismatch in " + path.string() +
                    " (file corrupted or hand-edited)");

  BagOfDescriptions bag;
  bag.frame_digest = j["frame_digest"].get<std::string>();
  if (!j["config"].is_object())
    throw DataError("load_bag: 'config' must be an object in " + path.string());
  for (const auto& [key, value] : j["config"].items()) {
    if (!value.is_string())
      throw DataError("load_bag: config value for '" + key + "' must be a string");
    bag.config[key] = value.get<std::string>();
  }

  if (!j["entries"].is_array() || j["entries"].empty())
    throw DataError("load_bag: 'entries' must be a non-empty array in " + path.string());
  Index dim = -1;
  Index idx = 0;
  for (const auto& je : j["entries"]) {
    const std::string where = "load_bag: entry " + std::to_string(idx);
    for (const char* field : {"kind", "text", "provenance", "sim_to_image", "embedding"})
      if (!je.contains(field))
        throw DataError(where + " is missing field '" + std::string(field) + "'");
    DescriptionEntry e;
    try {
      e.kind = entry_kind_from_string(je["kind"].get<std::string>());
      e.provenance = provenance_from_string(je["provenance"].get<std::string>());
    } catch (const DataError& err) {
      throw DataError(where + ": " + err.what());
    }
    e.text = je["text"].get<std::string>();
    if (!je["sim_to_image"].is_number())
      throw DataError(where + ": sim_to_image must be a number");
    e.sim_to_image = je["sim_to_image"].get<double>();
    if (!je["embedding"].is_array() || je["embedding"].empty())
      throw DataError(where + ": embedding must be a non-empty array");
    e.embedding.resize(static_cast<Index>(je["embedding"].size()));
    Index at = 0;
    for (const auto& x : je["embedding"]) {
      if (!x.is_number()) throw DataError(where + ": embedding entries must be numbers");
      e.embedding(at++) = x.get<double>();
    }
    if (dim < 0) dim = e.embedding.size();
    if (e.embedding.size() != dim)
      throw DataError(where + ": embedding dimension " + std::to_string(e.embedding.size()) +
                      " differs from previous entries (" + std::to_string(dim) + ")");
    bag.entries.push_back(std::move(e));
    ++idx;
  }
  return bag;
}

}  // namespace cldt
