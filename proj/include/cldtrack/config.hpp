#pragma once

#include "cldtrack/bag.hpp"
#include "cldtrack/encoders.hpp"
#include "cldtrack/fusion.hpp"
#include "cldtrack/train.hpp"
#include "cldtrack/types.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cldt {

enum class KeyType { Integer, Real, Boolean, Text };

/// One registered configuration key: its dotted name ("section.key"), value
/// type, textual default, and a one-line description.
struct KeySpec {
  std::string name;
  KeyType type;
  std::string default_value;
  std::string doc;
};

/// Typed key registry behind every command. Keys live in module sections
/// ("bag.tau_val", "train.lr", ...); unknown names are rejected everywhere.
/// Values layer in precedence order: built-in default, then a config file,
/// then CLDTRACK_* environment variables, then command-line flags — each
/// applied via set(), so the last writer wins.
class RunConfig {
 public:
  RunConfig();

  /// All registered keys in declaration order.
  const std::vector<KeySpec>& specs() const { return specs_; }
  bool has(const std::string& key) const;

  /// Sets a key from text. Throws ConfigError for unknown keys or values that
  /// do not parse as the key's type.
  void set(const std::string& key, const std::string& value);

  /// True once set() has written the key (config file, environment or flag).
  /// Lets a command substitute its own defaults only where the user stayed
  /// silent.
  bool explicitly_set(const std::string& key) const;

  long long get_int(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_text(const std::string& key) const;

  /// Layered loaders (see class comment for precedence).
  /// File format: INI-style "[section]" headers and "key = value" lines;
  /// blank lines and lines starting with '#' or ';' are ignored. Dotted keys
  /// ("bag.alpha = 0.5") work with or without a section header.
  void load_file(const std::filesystem::path& path);
  /// Applies every CLDTRACK_* variable present in the environment.
  void apply_env();

  /// "bag.tau_val" -> "CLDTRACK_BAG_TAU_VAL".
  static std::string env_name(const std::string& key);
  /// "ttfum.window_size" -> "--ttfum-window-size".
  static std::string flag_name(const std::string& key);

  /// One "key = default  (type)  doc" line per key, for help output.
  std::string describe() const;

  /// Seeds. run.seed is the master; the named streams are derived from it so
  /// independent stages never share a raw seed. train.seed = 0 means "derive".
  std::uint64_t master_seed() const;
  std::uint64_t encoder_seed() const;
  std::uint64_t feature_seed() const;
  std::uint64_t train_seed() const;

  /// Typed bundles for the pipeline stages.
  Index embed_dim() const;
  BagConfig bag_config() const;
  SearchGeometry geometry() const;
  TrackerConfig tracker_config() const;
  TrainConfig train_config() const;
  GenerativeClient::Options client_options() const;

 private:
  const KeySpec& spec(const std::string& key) const;

  std::vector<KeySpec> specs_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::string> values_;
  std::vector<bool> touched_;
};

}  // namespace cldt
