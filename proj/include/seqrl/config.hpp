#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "seqrl/baselines.hpp"
#include "seqrl/dt.hpp"
#include "seqrl/dtqn.hpp"
#include "seqrl/envs.hpp"
#include "seqrl/qlearning.hpp"

namespace seqrl {

enum class ConfigType { Int, Float, String, Bool };

using ConfigValue = std::variant<std::int64_t, double, std::string, bool>;

struct ConfigEntry {
  ConfigType type = ConfigType::String;
  ConfigValue value;
  std::string help;
};

/// Flat, typed key -> value map. Only registered keys exist.
class Config {
 public:
  /// Every known key with its documented default.
  static Config defaults();

  /// Parses `text` according to the key's type. `line` is reported in
  /// errors (0 for command-line flags).
  void set(const std::string& key, const std::string& text, int line = 0);

  bool contains(const std::string& key) const { return entries_.count(key) != 0; }
  std::int64_t get_int(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  double get_float(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::string value_text(const std::string& key) const;

  const std::map<std::string, ConfigEntry>& entries() const { return entries_; }
  /// "key = value" lines in key order; parses back to the same config.
  std::string to_text() const;

 private:
  void add(const std::string& key, ConfigType type, ConfigValue value, std::string help);
  const ConfigEntry& entry(const std::string& key, ConfigType type) const;

  std::map<std::string, ConfigEntry> entries_;
};

/// Applies `key = value` lines (# starts a comment) on top of `config`.
void apply_config_text(Config& config, const std::string& text);
void apply_config_file(Config& config, const std::string& path);

/// defaults <- file (if any) <- flags ("key=value"); later wins.
Config parse_config(const std::optional<std::string>& path, const std::vector<std::string>& flags);

EnvSettings env_settings_from(const Config& config);
QLearningConfig qlearning_config_from(const Config& config, const std::string& prefix);
DTQNConfig dtqn_config_from(const Config& config);
DRQNConfig drqn_config_from(const Config& config);
PPOConfig ppo_config_from(const Config& config);
DTConfig dt_config_from(const Config& config);

}  // namespace seqrl
