#include "seqrl/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "seqrl/error.hpp"
#include "seqrl/metrics.hpp"

namespace seqrl {

namespace {

using T = ConfigType;

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

const char* type_name(ConfigType type) {
  switch (type) {
    case T::Int:
      return "integer";
    case T::Float:
      return "number";
    case T::String:
      return "string";
    case T::Bool:
      return "boolean";
  }
  return "value";
}

std::string where(int line) { return line > 0 ? " (line " + std::to_string(line) + ")" : ""; }

void add_q_training_keys(Config& c, const std::string& p,
                         void (*add)(Config&, const std::string&, ConfigType, ConfigValue, std::string)) {
  add(c, p + ".total_steps", T::Int, std::int64_t{50000}, "environment decisions to train for");
  add(c, p + ".batch_size", T::Int, std::int64_t{32}, "windows per minibatch");
  add(c, p + ".buffer_capacity", T::Int, std::int64_t{100000}, "replay capacity in transitions");
  add(c, p + ".train_interval", T::Int, std::int64_t{4}, "decisions between gradient steps");
  add(c, p + ".learning_starts", T::Int, std::int64_t{1000}, "decisions before the first gradient step");
  add(c, p + ".target_sync", T::Int, std::int64_t{1000}, "gradient steps between target syncs");
  add(c, p + ".gamma", T::Float, 0.99, "discount factor");
  add(c, p + ".epsilon_start", T::Float, 1.0, "initial exploration rate");
  add(c, p + ".epsilon_end", T::Float, 0.05, "final exploration rate");
  add(c, p + ".epsilon_horizon", T::Int, std::int64_t{20000}, "decisions over which epsilon anneals");
  add(c, p + ".grad_clip", T::Float, 0.0, "global gradient norm limit (0 disables)");
  add(c, p + ".lr", T::Float, 3e-4, "Adam learning rate");
  add(c, p + ".beta1", T::Float, 0.9, "Adam first-moment decay");
  add(c, p + ".beta2", T::Float, 0.999, "Adam second-moment decay");
  add(c, p + ".adam_eps", T::Float, 1e-8, "Adam denominator epsilon");
}

}  // namespace

void Config::add(const std::string& key, ConfigType type, ConfigValue value, std::string help) {
  entries_[key] = ConfigEntry{type, std::move(value), std::move(help)};
}

Config Config::defaults() {
  Config c;
  auto add = [](Config& cfg, const std::string& key, ConfigType type, ConfigValue value, std::string help) {
    cfg.add(key, type, std::move(value), std::move(help));
  };
  auto a = [&](const std::string& key, ConfigType type, ConfigValue value, std::string help) {
    add(c, key, type, std::move(value), std::move(help));
  };
  const std::int64_t i0 = 0;
  a("seed", T::Int, i0, "master random seed");
  a("run.agent", T::String, std::string(), "agent kind that produced a run (set by train commands)");
  a("tensor.checked", T::Bool, true, "raise on NaN/Inf produced by any op");

  a("env.kind", T::String, std::string("grid_basic"), "grid_basic | mini_deathmatch | hallway");
  a("env.frame_skip", T::Int, std::int64_t{4}, "extra tics each action is repeated");

  const GridBasicConfig g;
  a("grid_basic.width", T::Int, std::int64_t(g.width), "arena columns");
  a("grid_basic.cell_units", T::Int, std::int64_t(g.cell_units), "movement steps per column");
  a("grid_basic.max_tics", T::Int, std::int64_t{g.max_tics}, "episode cap in tics");
  a("grid_basic.living_reward", T::Float, g.living_reward, "reward per tic");
  a("grid_basic.miss_penalty", T::Float, g.miss_penalty, "extra reward for a missed shot");
  a("grid_basic.kill_reward", T::Float, g.kill_reward, "reward for killing the monster");
  a("grid_basic.monster_health", T::Int, std::int64_t{g.monster_health}, "hits needed to kill the monster");
  a("grid_basic.ammo", T::Int, std::int64_t{g.ammo}, "starting ammo");

  const MiniDeathmatchConfig m;
  a("deathmatch.size", T::Int, std::int64_t(m.size), "arena side length");
  a("deathmatch.enemies", T::Int, std::int64_t(m.enemies), "scripted enemies");
  a("deathmatch.max_tics", T::Int, std::int64_t{m.max_tics}, "episode cap in tics");
  a("deathmatch.kill_reward", T::Float, m.kill_reward, "reward per kill");
  a("deathmatch.death_penalty", T::Float, m.death_penalty, "reward per death");
  a("deathmatch.pickup_reward", T::Float, m.pickup_reward, "reward per health/ammo pickup");
  a("deathmatch.damage_penalty", T::Float, m.damage_penalty, "penalty per health point lost");
  a("deathmatch.wasted_shot_penalty", T::Float, m.wasted_shot_penalty, "penalty per shot that hits nothing");
  a("deathmatch.living_reward", T::Float, m.living_reward, "reward per tic");
  a("deathmatch.max_health", T::Int, std::int64_t{m.max_health}, "agent health at spawn");
  a("deathmatch.max_ammo", T::Int, std::int64_t{m.max_ammo}, "ammo capacity");
  a("deathmatch.start_ammo", T::Int, std::int64_t{m.start_ammo}, "ammo at spawn");
  a("deathmatch.enemy_shoot_prob", T::Float, m.enemy_shoot_prob, "chance an aligned enemy fires per tic");
  a("deathmatch.enemy_damage", T::Int, std::int64_t{m.enemy_damage}, "damage per enemy hit");
  a("deathmatch.enemy_range", T::Int, std::int64_t(m.enemy_range), "enemy firing range in cells");
  a("deathmatch.enemy_move_prob", T::Float, m.enemy_move_prob, "chance an enemy steps per tic");
  a("deathmatch.respawn_delay", T::Int, std::int64_t{m.respawn_delay}, "tics before a killed enemy returns");
  a("deathmatch.view_range", T::Int, std::int64_t(m.view_range), "depth of the agent's vision cone");
  a("deathmatch.ammo_pack", T::Int, std::int64_t{m.ammo_pack}, "ammo per pickup");
  a("deathmatch.health_pack", T::Int, std::int64_t{m.health_pack}, "health per pickup");

  const HallwayConfig h;
  a("hallway.length", T::Int, std::int64_t(h.length), "corridor length");
  a("hallway.max_tics", T::Int, std::int64_t{h.max_tics}, "episode cap in tics");

  a("dtqn.d_model", T::Int, std::int64_t{64}, "embedding width");
  a("dtqn.n_heads", T::Int, std::int64_t{8}, "attention heads");
  a("dtqn.n_layers", T::Int, std::int64_t{5}, "transformer blocks");
  a("dtqn.d_ff", T::Int, std::int64_t{256}, "feed-forward width");
  a("dtqn.context_len", T::Int, std::int64_t{50}, "observation window length");
  a("dtqn.gating", T::String, std::string("gru"), "gru | residual");
  a("dtqn.gate_bias", T::Float, 2.0, "initial gate bias");
  a("dtqn.conv1_filters", T::Int, std::int64_t{8}, "first conv layer filters");
  a("dtqn.conv2_filters", T::Int, std::int64_t{16}, "second conv layer filters");
  a("dtqn.features_head", T::Bool, true, "train the auxiliary game-features head");
  a("dtqn.aux_weight", T::Float, 0.5, "weight of the features loss");
  add_q_training_keys(c, "dtqn", add);

  a("drqn.embed_dim", T::Int, std::int64_t{64}, "frame embedding width");
  a("drqn.hidden", T::Int, std::int64_t{64}, "LSTM hidden size");
  a("drqn.context_len", T::Int, std::int64_t{50}, "observation window length");
  a("drqn.conv1_filters", T::Int, std::int64_t{8}, "first conv layer filters");
  a("drqn.conv2_filters", T::Int, std::int64_t{16}, "second conv layer filters");
  add_q_training_keys(c, "drqn", add);

  a("dt.d_model", T::Int, std::int64_t{64}, "embedding width");
  a("dt.n_heads", T::Int, std::int64_t{8}, "attention heads");
  a("dt.n_layers", T::Int, std::int64_t{5}, "transformer blocks");
  a("dt.d_ff", T::Int, std::int64_t{256}, "feed-forward width");
  a("dt.context_len", T::Int, std::int64_t{90}, "timesteps per window");
  a("dt.gating", T::String, std::string("gru"), "gru | residual");
  a("dt.gate_bias", T::Float, 2.0, "initial gate bias");
  a("dt.conv1_filters", T::Int, std::int64_t{8}, "first conv layer filters");
  a("dt.conv2_filters", T::Int, std::int64_t{16}, "second conv layer filters");
  a("dt.rtg_scale", T::Float, 100.0, "divisor applied to returns-to-go");
  a("dt.gamma", T::Float, 1.0, "discount used for returns-to-go");
  a("dt.lr", T::Float, 1e-4, "Adam learning rate");
  a("dt.batch_size", T::Int, std::int64_t{64}, "windows per minibatch");
  a("dt.epochs", T::Int, std::int64_t{100}, "passes over the dataset");
  a("dt.grad_clip", T::Float, 1.0, "global gradient norm limit (0 disables)");
  a("dt.temperature", T::Float, 0.0, "rollout sampling temperature (0 = argmax)");
  a("dt.target_return", T::Float, 110.0, "initial return-to-go at evaluation");
  a("dt.max_steps", T::Int, std::int64_t{1000}, "decision cap per evaluation episode");
  a("dt.dataset", T::String, std::string(), "DRLT dataset to train on");
  a("dt.eval_episodes", T::Int, std::int64_t{100}, "evaluation episodes after training");

  a("ppo.hidden", T::Int, std::int64_t{128}, "MLP width");
  a("ppo.total_steps", T::Int, std::int64_t{90000}, "environment decisions to train for");
  a("ppo.n_envs", T::Int, std::int64_t{4}, "parallel environment instances");
  a("ppo.horizon", T::Int, std::int64_t{2048}, "decisions per update across all instances");
  a("ppo.epochs", T::Int, std::int64_t{4}, "passes over each rollout");
  a("ppo.minibatch", T::Int, std::int64_t{256}, "samples per gradient step");
  a("ppo.gamma", T::Float, 0.99, "discount factor");
  a("ppo.lambda", T::Float, 0.95, "GAE smoothing");
  a("ppo.clip", T::Float, 0.2, "ratio clip range");
  a("ppo.value_coef", T::Float, 0.5, "value loss weight");
  a("ppo.entropy_coef", T::Float, 0.01, "entropy bonus weight");
  a("ppo.max_grad_norm", T::Float, 0.5, "global gradient norm limit (0 disables)");
  a("ppo.reward_scale", T::Float, 0.01, "reward multiplier for advantage and value targets");
  a("ppo.lr", T::Float, 1e-3, "Adam learning rate");

  a("collect.policy", T::String, std::string("random"), "random | expert | ppo");
  a("collect.checkpoint", T::String, std::string(), "PPO checkpoint for collect.policy = ppo");
  a("collect.episodes", T::Int, std::int64_t{5000}, "trajectories to collect");
  a("collect.output", T::String, std::string("dataset.drlt"), "dataset path to write");

  a("stats.input", T::String, std::string(), "dataset to summarize");

  a("eval.agent", T::String, std::string(), "dtqn | drqn | ppo | dt | random | expert");
  a("eval.checkpoint", T::String, std::string(), "checkpoint to evaluate");
  a("eval.episodes", T::Int, std::int64_t{100}, "evaluation episodes");
  a("eval.epsilon", T::Float, 0.0, "exploration rate for Q agents");
  a("eval.greedy", T::Bool, false, "argmax instead of sampling for PPO");

  a("plot.input", T::String, std::string(), "metrics CSV to plot");
  a("plot.column", T::String, std::string("return"), "column to draw against step");
  a("plot.window", T::Int, std::int64_t{1}, "moving-average window");
  a("plot.output", T::String, std::string("plot.svg"), "SVG path to write");
  return c;
}

void Config::set(const std::string& key, const std::string& raw, int line) {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'" + where(line), key, line);
  const std::string text = trim(raw);
  ConfigEntry& e = it->second;
  auto bad = [&] {
    return ConfigError("config key '" + key + "' expects a " + type_name(e.type) + ", got '" + text + "'" + where(line),
                       key, line);
  };
  switch (e.type) {
    case T::Int: {
      std::int64_t v = 0;
      const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (text.empty() || ec != std::errc() || end != text.data() + text.size()) throw bad();
      e.value = v;
      break;
    }
    case T::Float: {
      double v = 0.0;
      const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (text.empty() || ec != std::errc() || end != text.data() + text.size()) throw bad();
      e.value = v;
      break;
    }
    case T::Bool:
      if (text == "true" || text == "1") {
        e.value = true;
      } else if (text == "false" || text == "0") {
        e.value = false;
      } else {
        throw bad();
      }
      break;
    case T::String:
      e.value = text;
      break;
  }
}

const ConfigEntry& Config::entry(const std::string& key, ConfigType type) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'", key);
  if (it->second.type != type) throw ConfigError("config key '" + key + "' is not a " + type_name(type), key);
  return it->second;
}

std::int64_t Config::get_int(const std::string& key) const { return std::get<std::int64_t>(entry(key, T::Int).value); }

std::size_t Config::get_size(const std::string& key) const {
  const std::int64_t v = get_int(key);
  if (v < 0) throw ConfigError("config key '" + key + "' must be >= 0, got " + std::to_string(v), key);
  return static_cast<std::size_t>(v);
}

double Config::get_float(const std::string& key) const { return std::get<double>(entry(key, T::Float).value); }

const std::string& Config::get_string(const std::string& key) const {
  return std::get<std::string>(entry(key, T::String).value);
}

bool Config::get_bool(const std::string& key) const { return std::get<bool>(entry(key, T::Bool).value); }

std::string Config::value_text(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'", key);
  return std::visit(
      [](const auto& v) -> std::string {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, std::int64_t>) return std::to_string(v);
        if constexpr (std::is_same_v<V, double>) return format_double(v);
        if constexpr (std::is_same_v<V, bool>) return v ? "true" : "false";
        if constexpr (std::is_same_v<V, std::string>) return v;
      },
      it->second.value);
}

std::string Config::to_text() const {
  std::string out;
  for (const auto& [key, e] : entries_) out += key + " = " + value_text(key) + "\n";
  return out;
}

void apply_config_text(Config& config, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("expected 'key = value' at line " + std::to_string(number), trim(line), number);
    }
    config.set(trim(line.substr(0, eq)), line.substr(eq + 1), number);
  }
}

void apply_config_file(Config& config, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  apply_config_text(config, text.str());
}

Config parse_config(const std::optional<std::string>& path, const std::vector<std::string>& flags) {
  Config config = Config::defaults();
  if (path) apply_config_file(config, *path);
  for (const auto& flag : flags) {
    const auto eq = flag.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + flag + "' is not key=value", flag);
    config.set(trim(flag.substr(0, eq)), flag.substr(eq + 1));
  }
  return config;
}

EnvSettings env_settings_from(const Config& c) {
  EnvSettings s;
  try {
    s.kind = parse_env_kind(c.get_string("env.kind"));
  } catch (const IndexError& e) {
    throw ConfigError(e.what(), "env.kind");
  }
  auto& g = s.grid_basic;
  g.width = c.get_size("grid_basic.width");
  g.cell_units = c.get_size("grid_basic.cell_units");
  g.max_tics = static_cast<int>(c.get_int("grid_basic.max_tics"));
  g.living_reward = c.get_float("grid_basic.living_reward");
  g.miss_penalty = c.get_float("grid_basic.miss_penalty");
  g.kill_reward = c.get_float("grid_basic.kill_reward");
  g.monster_health = static_cast<int>(c.get_int("grid_basic.monster_health"));
  g.ammo = static_cast<int>(c.get_int("grid_basic.ammo"));
  auto& m = s.deathmatch;
  m.size = c.get_size("deathmatch.size");
  m.enemies = c.get_size("deathmatch.enemies");
  m.max_tics = static_cast<int>(c.get_int("deathmatch.max_tics"));
  m.kill_reward = c.get_float("deathmatch.kill_reward");
  m.death_penalty = c.get_float("deathmatch.death_penalty");
  m.pickup_reward = c.get_float("deathmatch.pickup_reward");
  m.damage_penalty = c.get_float("deathmatch.damage_penalty");
  m.wasted_shot_penalty = c.get_float("deathmatch.wasted_shot_penalty");
  m.living_reward = c.get_float("deathmatch.living_reward");
  m.max_health = static_cast<int>(c.get_int("deathmatch.max_health"));
  m.max_ammo = static_cast<int>(c.get_int("deathmatch.max_ammo"));
  m.start_ammo = static_cast<int>(c.get_int("deathmatch.start_ammo"));
  m.enemy_shoot_prob = c.get_float("deathmatch.enemy_shoot_prob");
  m.enemy_damage = static_cast<int>(c.get_int("deathmatch.enemy_damage"));
  m.enemy_range = c.get_size("deathmatch.enemy_range");
  m.enemy_move_prob = c.get_float("deathmatch.enemy_move_prob");
  m.respawn_delay = static_cast<int>(c.get_int("deathmatch.respawn_delay"));
  m.view_range = c.get_size("deathmatch.view_range");
  m.ammo_pack = static_cast<int>(c.get_int("deathmatch.ammo_pack"));
  m.health_pack = static_cast<int>(c.get_int("deathmatch.health_pack"));
  s.hallway.length = c.get_size("hallway.length");
  s.hallway.max_tics = static_cast<int>(c.get_int("hallway.max_tics"));
  return s;
}

QLearningConfig qlearning_config_from(const Config& c, const std::string& p) {
  QLearningConfig q;
  q.total_steps = c.get_size(p + ".total_steps");
  q.batch_size = c.get_size(p + ".batch_size");
  q.buffer_capacity = c.get_size(p + ".buffer_capacity");
  q.train_interval = c.get_size(p + ".train_interval");
  q.learning_starts = c.get_size(p + ".learning_starts");
  q.target_sync = c.get_size(p + ".target_sync");
  q.gamma = c.get_float(p + ".gamma");
  q.epsilon_start = c.get_float(p + ".epsilon_start");
  q.epsilon_end = c.get_float(p + ".epsilon_end");
  q.epsilon_horizon = c.get_size(p + ".epsilon_horizon");
  q.aux_weight = c.contains(p + ".aux_weight") ? c.get_float(p + ".aux_weight") : 0.0;
  q.grad_clip = c.get_float(p + ".grad_clip");
  q.adam = {c.get_float(p + ".lr"), c.get_float(p + ".beta1"), c.get_float(p + ".beta2"), c.get_float(p + ".adam_eps")};
  q.frame_skip = c.get_size("env.frame_skip");
  q.seed = static_cast<std::uint64_t>(c.get_int("seed"));
  try {
    q.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(e.what(), p + "." + e.key());
  }
  return q;
}

namespace {

TransformerConfig transformer_from(const Config& c, const std::string& p) {
  TransformerConfig t;
  t.d_model = c.get_size(p + ".d_model");
  t.n_heads = c.get_size(p + ".n_heads");
  t.n_layers = c.get_size(p + ".n_layers");
  t.d_ff = c.get_size(p + ".d_ff");
  t.context_len = c.get_size(p + ".context_len");
  try {
    t.gating = parse_gating(c.get_string(p + ".gating"));
    t.validate();
  } catch (const DimensionError& e) {
    throw ConfigError(e.what(), p);
  }
  t.gate_bias = c.get_float(p + ".gate_bias");
  return t;
}

}  // namespace

DTQNConfig dtqn_config_from(const Config& c) {
  DTQNConfig d;
  d.transformer = transformer_from(c, "dtqn");
  d.conv1_filters = c.get_size("dtqn.conv1_filters");
  d.conv2_filters = c.get_size("dtqn.conv2_filters");
  d.features_head = c.get_bool("dtqn.features_head");
  return d;
}

DRQNConfig drqn_config_from(const Config& c) {
  DRQNConfig d;
  d.embed_dim = c.get_size("drqn.embed_dim");
  d.hidden = c.get_size("drqn.hidden");
  d.context_len = c.get_size("drqn.context_len");
  d.conv1_filters = c.get_size("drqn.conv1_filters");
  d.conv2_filters = c.get_size("drqn.conv2_filters");
  return d;
}

PPOConfig ppo_config_from(const Config& c) {
  PPOConfig p;
  p.hidden = c.get_size("ppo.hidden");
  p.total_steps = c.get_size("ppo.total_steps");
  p.n_envs = c.get_size("ppo.n_envs");
  p.horizon = c.get_size("ppo.horizon");
  p.epochs = c.get_size("ppo.epochs");
  p.minibatch = c.get_size("ppo.minibatch");
  p.gamma = c.get_float("ppo.gamma");
  p.lambda = c.get_float("ppo.lambda");
  p.clip = c.get_float("ppo.clip");
  p.value_coef = c.get_float("ppo.value_coef");
  p.entropy_coef = c.get_float("ppo.entropy_coef");
  p.max_grad_norm = c.get_float("ppo.max_grad_norm");
  p.reward_scale = c.get_float("ppo.reward_scale");
  p.adam.lr = c.get_float("ppo.lr");
  p.frame_skip = c.get_size("env.frame_skip");
  p.seed = static_cast<std::uint64_t>(c.get_int("seed"));
  p.validate();
  return p;
}

DTConfig dt_config_from(const Config& c) {
  DTConfig d;
  d.transformer = transformer_from(c, "dt");
  d.conv1_filters = c.get_size("dt.conv1_filters");
  d.conv2_filters = c.get_size("dt.conv2_filters");
  d.rtg_scale = c.get_float("dt.rtg_scale");
  d.gamma = c.get_float("dt.gamma");
  d.adam.lr = c.get_float("dt.lr");
  d.batch_size = c.get_size("dt.batch_size");
  d.epochs = c.get_size("dt.epochs");
  d.grad_clip = c.get_float("dt.grad_clip");
  d.temperature = c.get_float("dt.temperature");
  d.seed = static_cast<std::uint64_t>(c.get_int("seed"));
  d.validate();
  return d;
}

}  // namespace seqrl
