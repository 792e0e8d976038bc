#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "seqrl/rng.hpp"

namespace seqrl {

enum class EnvKind { GridBasic, MiniDeathmatch, Hallway };

EnvKind parse_env_kind(const std::string& name);
std::string env_kind_name(EnvKind kind);

struct ObsShape {
  std::size_t channels = 0, height = 0, width = 0;

  std::size_t size() const { return channels * height * width; }
  bool operator==(const ObsShape&) const = default;
};

/// One-hot planes [C x H x W] with values in {0, 1}; only what the agent can
/// currently see.
struct Observation {
  ObsShape shape;
  std::vector<double> planes;

  double at(std::size_t c, std::size_t h, std::size_t w) const {
    return planes[(c * shape.height + h) * shape.width + w];
  }
  bool operator==(const Observation&) const = default;
};

/// Simulator-side signals, each normalized to [0, 1]. Never derivable from
/// the observation alone.
struct GameFeatures {
  double health = 0.0;
  double ammo = 0.0;
  double enemies = 0.0;

  bool operator==(const GameFeatures&) const = default;
};

struct StepInfo {
  int kills = 0;
  int deaths = 0;
  int tics = 0;
  bool timeout = false;
  bool success = false;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  GameFeatures features;
  StepInfo info;
};

struct GridBasicConfig {
  std::size_t width = 11;
  /// Movement granularity: one tic moves 1/cell_units of a column.
  std::size_t cell_units = 5;
  int max_tics = 300;
  double living_reward = -1.0;
  double miss_penalty = -5.0;
  double kill_reward = 101.0;
  int monster_health = 1;
  int ammo = 50;
};

struct MiniDeathmatchConfig {
  std::size_t size = 9;
  std::size_t enemies = 3;
  int max_tics = 1000;
  double kill_reward = 1.0;
  double death_penalty = -1.0;
  double pickup_reward = 0.1;
  double damage_penalty = 0.05;
  double wasted_shot_penalty = 0.02;
  double living_reward = 0.0;
  int max_health = 100;
  int max_ammo = 50;
  int start_ammo = 20;
  double enemy_shoot_prob = 0.15;
  int enemy_damage = 20;
  std::size_t enemy_range = 4;
  double enemy_move_prob = 0.5;
  int respawn_delay = 10;
  std::size_t view_range = 8;
  int ammo_pack = 10;
  int health_pack = 25;
};

struct HallwayConfig {
  std::size_t length = 6;
  int max_tics = 40;
};

struct EnvSettings {
  EnvKind kind = EnvKind::GridBasic;
  GridBasicConfig grid_basic;
  MiniDeathmatchConfig deathmatch;
  HallwayConfig hallway;
};

/// Deterministic, seedable POMDP. Stepping a finished episode is a
/// StateError until the next reset.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual EnvKind kind() const = 0;
  virtual ObsShape observation_shape() const = 0;
  virtual std::size_t action_count() const = 0;
  virtual std::vector<std::string> action_names() const = 0;

  virtual Observation reset(std::uint64_t seed) = 0;
  virtual StepResult step(std::size_t action) = 0;
  virtual GameFeatures game_features() const = 0;
  virtual Observation observe() const = 0;
  virtual std::string render_ascii() const = 0;
  /// Canonical dump of the complete simulator state, RNG included.
  virtual std::string state_key() const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;

  bool done() const { return done_; }
  int tic() const { return tic_; }

 protected:
  void check_step(std::size_t action) const;

  bool done_ = true;
  int tic_ = 0;
};

std::unique_ptr<Environment> make_env(const EnvSettings& settings);

/// Repeats `action` for up to k + 1 tics, stopping early at episode end.
/// Rewards and kill/death counters are summed; the last observation wins.
StepResult frame_skip_step(Environment& env, std::size_t action, std::size_t k);

/// Agent facing a monster on the far wall of a 1 x W arena.
class GridBasic final : public Environment {
 public:
  enum Action : std::size_t { kLeft = 0, kRight = 1, kShoot = 2 };

  explicit GridBasic(GridBasicConfig config = {});

  EnvKind kind() const override { return EnvKind::GridBasic; }
  ObsShape observation_shape() const override;
  std::size_t action_count() const override { return 3; }
  std::vector<std::string> action_names() const override { return {"left", "right", "shoot"}; }
  Observation reset(std::uint64_t seed) override;
  StepResult step(std::size_t action) override;
  GameFeatures game_features() const override;
  Observation observe() const override;
  std::string render_ascii() const override;
  std::string state_key() const override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<GridBasic>(*this); }

  const GridBasicConfig& config() const { return config_; }
  std::size_t agent_column() const { return agent_pos_ / config_.cell_units; }
  std::size_t monster_column() const { return monster_col_; }
  int ammo() const { return ammo_; }
  /// Test hook: place the agent in the middle of `column`.
  void place_agent(std::size_t column);

 private:
  GridBasicConfig config_;
  Rng rng_;
  std::size_t agent_pos_ = 0;
  std::size_t monster_col_ = 0;
  int monster_health_ = 0;
  int ammo_ = 0;
};

/// Scripted GridBasic expert reading only the observation: walk toward the
/// monster's column, shoot once aligned.
std::size_t grid_basic_expert_action(const Observation& obs);

/// Arena deathmatch against scripted, respawning enemies; the agent sees
/// enemies and pickups only inside its forward vision cone.
class MiniDeathmatch final : public Environment {
 public:
  enum Action : std::size_t { kTurnLeft = 0, kTurnRight = 1, kForward = 2, kShoot = 3, kNoop = 4 };

  struct Cell {
    int row = 0, col = 0;
    bool operator==(const Cell&) const = default;
  };
  struct Enemy {
    Cell pos;
    bool alive = true;
    int respawn_in = 0;
  };

  explicit MiniDeathmatch(MiniDeathmatchConfig config = {});

  EnvKind kind() const override { return EnvKind::MiniDeathmatch; }
  ObsShape observation_shape() const override;
  std::size_t action_count() const override { return 5; }
  std::vector<std::string> action_names() const override {
    return {"turn-left", "turn-right", "forward", "shoot", "noop"};
  }
  Observation reset(std::uint64_t seed) override;
  StepResult step(std::size_t action) override;
  GameFeatures game_features() const override;
  Observation observe() const override;
  std::string render_ascii() const override;
  std::string state_key() const override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<MiniDeathmatch>(*this); }

  const MiniDeathmatchConfig& config() const { return config_; }
  bool is_wall(Cell c) const;
  bool in_view(Cell c) const;
  std::size_t visible_enemy_count() const;
  int health() const { return health_; }
  int ammo() const { return ammo_; }
  int facing() const { return facing_; }
  Cell agent() const { return agent_; }
  const std::vector<Enemy>& enemies() const { return enemies_; }
  int total_kills() const { return kills_; }
  int total_deaths() const { return deaths_; }
  /// Test hooks.
  void place_agent(Cell pos, int facing);
  void place_enemy(std::size_t index, Cell pos);

 private:
  bool occupied(Cell c) const;
  Cell random_free_cell(int min_distance_from_agent);
  bool clear_line(Cell a, Cell b) const;
  void respawn_agent();

  MiniDeathmatchConfig config_;
  Rng rng_;
  Cell agent_;
  int facing_ = 0;  // 0 north, 1 east, 2 south, 3 west
  int health_ = 0;
  int ammo_ = 0;
  int kills_ = 0;
  int deaths_ = 0;
  std::vector<Enemy> enemies_;
  Cell health_item_, ammo_item_;
};

/// T-maze memory task: the cue is visible only at t = 0 and names the end
/// (up or down) of the junction that pays +1.
class Hallway final : public Environment {
 public:
  enum Action : std::size_t { kForward = 0, kUp = 1, kDown = 2 };

  explicit Hallway(HallwayConfig config = {});

  EnvKind kind() const override { return EnvKind::Hallway; }
  ObsShape observation_shape() const override;
  std::size_t action_count() const override { return 3; }
  std::vector<std::string> action_names() const override { return {"forward", "up", "down"}; }
  Observation reset(std::uint64_t seed) override;
  StepResult step(std::size_t action) override;
  GameFeatures game_features() const override { return {1.0, 0.0, 0.0}; }
  Observation observe() const override;
  std::string render_ascii() const override;
  std::string state_key() const override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<Hallway>(*this); }

  bool goal_is_up() const { return goal_up_; }
  std::size_t position() const { return pos_; }

 private:
  HallwayConfig config_;
  Rng rng_;
  std::size_t pos_ = 0;
  bool goal_up_ = true;
};

}  // namespace seqrl
