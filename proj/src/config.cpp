#include "cldtrack/config.hpp"

#include "cldtrack/random.hpp"
#include "cldtrack/ttfum.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace cldt {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

const char* type_name(KeyType t) {
  switch (t) {
    case KeyType::Integer: return "integer";
    case KeyType::Real: return "real";
    case KeyType::Boolean: return "boolean";
    case KeyType::Text: return "text";
  }
  return "?";
}

void check_value(const KeySpec& spec, const std::string& value) {
  const std::string v = trim(value);
  switch (spec.type) {
    case KeyType::Integer: {
      std::size_t used = 0;
      try {
        (void)std::stoll(v, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != v.size()) {
        throw ConfigError("config: " + spec.name + " expects an integer, got '" + value + "'");
      }
      return;
    }
    case KeyType::Real: {
      std::size_t used = 0;
      try {
        (void)std::stod(v, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != v.size()) {
        throw ConfigError("config: " + spec.name + " expects a number, got '" + value + "'");
      }
      return;
    }
    case KeyType::Boolean:
      if (v != "true" && v != "false" && v != "1" && v != "0") {
        throw ConfigError("config: " + spec.name + " expects true/false/1/0, got '" + value +
                          "'");
      }
      return;
    case KeyType::Text:
      return;
  }
}

}  // namespace

RunConfig::RunConfig() {
  auto add = [&](std::string name, KeyType type, std::string def, std::string doc) {
    index_[name] = specs_.size();
    values_.push_back(def);
    touched_.push_back(false);
    specs_.push_back({std::move(name), type, std::move(def), std::move(doc)});
  };

  add("run.seed", KeyType::Integer, "1234",
      "master seed; every random stream in a run derives from it");

  add("embed.dim", KeyType::Integer, "32", "embedding dimension of the stub encoders");

  add("client.mode", KeyType::Text, "mock",
      "description service: 'mock' (canned/synthesized) or 'live' (HTTP)");
  add("client.url", KeyType::Text, "", "live endpoint, e.g. http://host:8080/generate");
  add("client.responses_dir", KeyType::Text, "",
      "canned response directory for mock mode (empty: synthesized fallback)");
  add("client.max_attempts", KeyType::Integer, "3", "tries per generate call");
  add("client.concurrency", KeyType::Integer, "4", "max in-flight generate calls");
  add("client.backoff_ms", KeyType::Integer, "25", "retry backoff start, doubles per attempt");
  add("client.draw_target_box", KeyType::Boolean, "true",
      "draw the target box into the pixels sent to the service");
  add("client.send_pixels", KeyType::Boolean, "false",
      "send full pixels instead of the image digest");

  add("bag.tau_val", KeyType::Real, "0.8", "validation filter cosine threshold (inclusive)");
  add("bag.tau_syn", KeyType::Real, "0.5", "synonym admission cosine threshold");
  add("bag.alpha", KeyType::Real, "0.3", "perturbation strength: synonym swap probability");
  add("bag.n_syn", KeyType::Integer, "10", "synonyms requested per description token");
  add("bag.n_task", KeyType::Integer, "10", "task-specific phrases requested per class");
  add("bag.top_k_attributes", KeyType::Integer, "4", "attributes kept per image");
  add("bag.regen_rounds", KeyType::Integer, "2",
      "regeneration attempts for a discarded generated description");

  add("adapter.context_count", KeyType::Integer, "2",
      "learnable context vectors (0 degrades to plain cosine matching)");
  add("adapter.temperature", KeyType::Real, "0.07", "softmax temperature for selection scores");

  add("ttfum.window_size", KeyType::Integer, "5", "temporal text window capacity");
  add("ttfum.strategy", KeyType::Text, "average",
      "window aggregation: average | last | max | weighted");
  add("ttfum.update_interval", KeyType::Integer, "1",
      "frames between attention-weight recomputes");
  add("ttfum.decay", KeyType::Real, "0.5",
      "per-step age decay for the weighted strategy, newest heaviest");

  add("search.size", KeyType::Integer, "384", "search crop side after resize, pixels");
  add("search.area_factor", KeyType::Real, "4", "search crop area relative to the box");
  add("exemplar.size", KeyType::Integer, "192", "exemplar crop side after resize, pixels");
  add("exemplar.area_factor", KeyType::Real, "2", "exemplar crop area relative to the box");
  add("head.grid", KeyType::Integer, "16", "prediction grid side (grid x grid candidates)");
  add("inference.hanning_weight", KeyType::Real, "0.49",
      "window-penalty mix: 0 raw scores, 1 pure window");

  add("loss.lambda_iou", KeyType::Real, "2", "overlap-loss weight in the total loss");
  add("loss.lambda_l1", KeyType::Real, "5", "corner-L1 weight in the total loss");

  add("train.steps", KeyType::Integer, "200", "toy-training gradient steps");
  add("train.lr", KeyType::Real, "0.2", "toy-training learning rate");
  add("train.clip", KeyType::Real, "2", "global gradient-norm ceiling (0 disables)");
  add("train.seed", KeyType::Integer, "0",
      "parameter-init seed; 0 derives it from run.seed");
}

const KeySpec& RunConfig::spec(const std::string& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) throw ConfigError("config: unknown key '" + key + "'");
  return specs_[it->second];
}

bool RunConfig::has(const std::string& key) const { return index_.count(key) > 0; }

void RunConfig::set(const std::string& key, const std::string& value) {
  const KeySpec& s = spec(key);
  check_value(s, value);
  values_[index_.at(key)] = s.type == KeyType::Text ? value : trim(value);
  touched_[index_.at(key)] = true;
}

bool RunConfig::explicitly_set(const std::string& key) const {
  spec(key);  // unknown keys are an error here too
  return touched_[index_.at(key)];
}

long long RunConfig::get_int(const std::string& key) const {
  const KeySpec& s = spec(key);
  if (s.type != KeyType::Integer) {
    throw ConfigError("config: " + key + " is not an integer key");
  }
  return std::stoll(values_[index_.at(key)]);
}

double RunConfig::get_real(const std::string& key) const {
  const KeySpec& s = spec(key);
  if (s.type != KeyType::Real && s.type != KeyType::Integer) {
    throw ConfigError("config: " + key + " is not a numeric key");
  }
  return std::stod(values_[index_.at(key)]);
}

bool RunConfig::get_bool(const std::string& key) const {
  const KeySpec& s = spec(key);
  if (s.type != KeyType::Boolean) {
    throw ConfigError("config: " + key + " is not a boolean key");
  }
  const std::string& v = values_[index_.at(key)];
  return v == "true" || v == "1";
}

const std::string& RunConfig::get_text(const std::string& key) const {
  (void)spec(key);
  return values_[index_.at(key)];
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw ConfigError("config: " + path.string() + " line " + std::to_string(lineno) +
                          ": unterminated section header");
      }
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) {
        throw ConfigError("config: " + path.string() + " line " + std::to_string(lineno) +
                          ": empty section name");
      }
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: " + path.string() + " line " + std::to_string(lineno) +
                        ": expected 'key = value'");
    }
    std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config: " + path.string() + " line " + std::to_string(lineno) +
                        ": empty key");
    }
    if (key.find('.') == std::string::npos) {
      if (section.empty()) {
        throw ConfigError("config: " + path.string() + " line " + std::to_string(lineno) +
                          ": key '" + key + "' appears before any [section]");
      }
      key = section + "." + key;
    }
    try {
      set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config: " + path.string() + " line " + std::to_string(lineno) + ": " +
                        e.what());
    }
  }
}

std::string RunConfig::env_name(const std::string& key) {
  std::string out = "CLDTRACK_";
  for (char c : key) {
    out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return out;
}

std::string RunConfig::flag_name(const std::string& key) {
  std::string out = "--";
  for (char c : key) out += (c == '.' || c == '_') ? '-' : c;
  return out;
}

void RunConfig::apply_env() {
  for (const KeySpec& s : specs_) {
    const std::string name = env_name(s.name);
    if (const char* v = std::getenv(name.c_str())) {
      try {
        set(s.name, v);
      } catch (const ConfigError& e) {
        throw ConfigError("config: environment variable " + name + ": " + e.what());
      }
    }
  }
}

std::string RunConfig::describe() const {
  std::ostringstream out;
  for (const KeySpec& s : specs_) {
    const std::string shown = s.default_value.empty() ? "\"\"" : s.default_value;
    out << s.name << " = " << shown << "  (" << type_name(s.type) << ")  " << s.doc << "\n";
  }
  return out.str();
}

std::uint64_t RunConfig::master_seed() const {
  return static_cast<std::uint64_t>(get_int("run.seed"));
}

std::uint64_t RunConfig::encoder_seed() const { return derive_seed(master_seed(), "encoder"); }

std::uint64_t RunConfig::feature_seed() const { return derive_seed(master_seed(), "features"); }

std::uint64_t RunConfig::train_seed() const {
  const long long sown = get_int("train.seed");
  if (sown != 0) return static_cast<std::uint64_t>(sown);
  return derive_seed(master_seed(), "train");
}

Index RunConfig::embed_dim() const {
  const long long dim = get_int("embed.dim");
  if (dim < 4) throw ConfigError("config: embed.dim must be at least 4");
  return static_cast<Index>(dim);
}

BagConfig RunConfig::bag_config() const {
  BagConfig bc;
  bc.tau_val = get_real("bag.tau_val");
  bc.tau_syn = get_real("bag.tau_syn");
  bc.alpha = get_real("bag.alpha");
  bc.n_syn = static_cast<int>(get_int("bag.n_syn"));
  bc.n_task = static_cast<int>(get_int("bag.n_task"));
  bc.top_k_attributes = static_cast<int>(get_int("bag.top_k_attributes"));
  bc.regen_rounds = static_cast<int>(get_int("bag.regen_rounds"));
  bc.seed = master_seed();
  return bc;
}

SearchGeometry RunConfig::geometry() const {
  SearchGeometry g;
  g.search_size = static_cast<Index>(get_int("search.size"));
  g.exemplar_size = static_cast<Index>(get_int("exemplar.size"));
  g.search_area_factor = get_real("search.area_factor");
  g.exemplar_area_factor = get_real("exemplar.area_factor");
  g.grid = static_cast<Index>(get_int("head.grid"));
  g.validate();
  return g;
}

TrackerConfig RunConfig::tracker_config() const {
  TrackerConfig tc;
  tc.geometry = geometry();
  tc.hanning_weight = get_real("inference.hanning_weight");
  tc.window_size = static_cast<Index>(get_int("ttfum.window_size"));
  tc.update_interval = static_cast<Index>(get_int("ttfum.update_interval"));
  tc.strategy.mode = aggregation_from_string(get_text("ttfum.strategy"));
  tc.weighted_decay = get_real("ttfum.decay");
  tc.feature_seed = feature_seed();
  tc.validate();
  return tc;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig tc;
  tc.steps = static_cast<Index>(get_int("train.steps"));
  tc.learning_rate = get_real("train.lr");
  tc.max_grad_norm = get_real("train.clip");
  tc.weights.iou = get_real("loss.lambda_iou");
  tc.weights.l1 = get_real("loss.lambda_l1");
  tc.validate();
  return tc;
}

GenerativeClient::Options RunConfig::client_options() const {
  GenerativeClient::Options o;
  o.max_attempts = static_cast<int>(get_int("client.max_attempts"));
  o.concurrency = static_cast<int>(get_int("client.concurrency"));
  o.backoff_ms = static_cast<int>(get_int("client.backoff_ms"));
  o.draw_target_box = get_bool("client.draw_target_box");
  o.send_pixels = get_bool("client.send_pixels");
  return o;
}

}  // namespace cldt
