#include "seqrl/envs.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "seqrl/error.hpp"

namespace seqrl {

EnvKind parse_env_kind(const std::string& name) {
  if (name == "grid_basic") return EnvKind::GridBasic;
  if (name == "mini_deathmatch") return EnvKind::MiniDeathmatch;
  if (name == "hallway") return EnvKind::Hallway;
  throw IndexError("unknown environment kind '" + name + "'");
}

std::string env_kind_name(EnvKind kind) {
  switch (kind) {
    case EnvKind::GridBasic:
      return "grid_basic";
    case EnvKind::MiniDeathmatch:
      return "mini_deathmatch";
    case EnvKind::Hallway:
      return "hallway";
  }
  return "unknown";
}

void Environment::check_step(std::size_t action) const {
  if (done_) throw StateError("step() on a finished episode; call reset() first");
  if (action >= action_count()) {
    throw IndexError("action " + std::to_string(action) + " outside action set of size " +
                     std::to_string(action_count()));
  }
}

std::unique_ptr<Environment> make_env(const EnvSettings& settings) {
  switch (settings.kind) {
    case EnvKind::GridBasic:
      return std::make_unique<GridBasic>(settings.grid_basic);
    case EnvKind::MiniDeathmatch:
      return std::make_unique<MiniDeathmatch>(settings.deathmatch);
    case EnvKind::Hallway:
      return std::make_unique<Hallway>(settings.hallway);
  }
  throw IndexError("unknown environment kind");
}

StepResult frame_skip_step(Environment& env, std::size_t action, std::size_t k) {
  StepResult total = env.step(action);
  for (std::size_t i = 0; i < k && !total.done; ++i) {
    StepResult next = env.step(action);
    total.reward += next.reward;
    total.done = next.done;
    total.observation = std::move(next.observation);
    total.features = next.features;
    total.info.kills += next.info.kills;
    total.info.deaths += next.info.deaths;
    total.info.tics += next.info.tics;
    total.info.timeout = next.info.timeout;
    total.info.success = total.info.success || next.info.success;
  }
  return total;
}

// ---------------------------------------------------------------- GridBasic

GridBasic::GridBasic(GridBasicConfig config) : config_(config) {
  if (config_.width < 1 || config_.cell_units < 1 || config_.max_tics < 1) {
    throw DimensionError("grid_basic: width, cell_units and max_tics must be positive");
  }
}

ObsShape GridBasic::observation_shape() const { return {3, 2, config_.width + 2}; }

Observation GridBasic::reset(std::uint64_t seed) {
  rng_.reseed(seed);
  tic_ = 0;
  done_ = false;
  place_agent(config_.width / 2);
  monster_col_ = static_cast<std::size_t>(rng_.below(config_.width));
  monster_health_ = config_.monster_health;
  ammo_ = config_.ammo;
  return observe();
}

void GridBasic::place_agent(std::size_t column) {
  agent_pos_ = std::min(column, config_.width - 1) * config_.cell_units + config_.cell_units / 2;
}

StepResult GridBasic::step(std::size_t action) {
  check_step(action);
  StepResult result;
  ++tic_;
  result.info.tics = 1;
  result.reward = config_.living_reward;
  const std::size_t max_pos = config_.width * config_.cell_units - 1;
  switch (action) {
    case kLeft:
      if (agent_pos_ > 0) --agent_pos_;
      break;
    case kRight:
      if (agent_pos_ < max_pos) ++agent_pos_;
      break;
    case kShoot:
      if (ammo_ > 0) {
        --ammo_;
        if (monster_health_ > 0 && agent_column() == monster_col_) {
          if (--monster_health_ == 0) {
            result.reward += config_.kill_reward;
            result.info.kills = 1;
            result.info.success = true;
            done_ = true;
          }
        } else {
          result.reward += config_.miss_penalty;
        }
      }
      break;
    default:
      break;
  }
  if (!done_ && tic_ >= config_.max_tics) {
    done_ = true;
    result.info.timeout = true;
  }
  result.done = done_;
  result.observation = observe();
  result.features = game_features();
  return result;
}

GameFeatures GridBasic::game_features() const {
  return {1.0, config_.ammo > 0 ? static_cast<double>(ammo_) / config_.ammo : 0.0, monster_health_ > 0 ? 1.0 : 0.0};
}

Observation GridBasic::observe() const {
  const ObsShape s = observation_shape();
  Observation obs{s, std::vector<double>(s.size(), 0.0)};
  auto set = [&](std::size_t c, std::size_t h, std::size_t w) { obs.planes[(c * s.height + h) * s.width + w] = 1.0; };
  for (std::size_t h = 0; h < s.height; ++h) {
    set(0, h, 0);
    set(0, h, s.width - 1);
  }
  if (monster_health_ > 0) set(1, 0, monster_col_ + 1);
  set(2, 1, agent_column() + 1);
  return obs;
}

std::string GridBasic::render_ascii() const {
  std::string far(config_.width + 2, '.'), near(config_.width + 2, '.');
  far.front() = far.back() = near.front() = near.back() = '#';
  if (monster_health_ > 0) far[monster_col_ + 1] = 'M';
  near[agent_column() + 1] = '@';
  return far + "\n" + near + "\n";
}

std::string GridBasic::state_key() const {
  std::ostringstream out;
  out << "grid_basic tic=" << tic_ << " done=" << done_ << " agent=" << agent_pos_ << " monster=" << monster_col_
      << " mhp=" << monster_health_ << " ammo=" << ammo_;
  for (auto s : rng_.state()) out << ' ' << s;
  return out.str();
}

std::size_t grid_basic_expert_action(const Observation& obs) {
  const std::size_t w = obs.shape.width;
  std::size_t agent = w, monster = w;
  for (std::size_t x = 0; x < w; ++x) {
    if (obs.at(2, 1, x) > 0.5) agent = x;
    if (obs.at(1, 0, x) > 0.5) monster = x;
  }
  if (agent == w || monster == w || agent == monster) return GridBasic::kShoot;
  return monster < agent ? GridBasic::kLeft : GridBasic::kRight;
}

// ----------------------------------------------------------- MiniDeathmatch

namespace {

constexpr int kRowStep[4] = {-1, 0, 1, 0};
constexpr int kColStep[4] = {0, 1, 0, -1};

}  // namespace

MiniDeathmatch::MiniDeathmatch(MiniDeathmatchConfig config) : config_(config) {
  if (config_.size < 7) throw DimensionError("mini_deathmatch: size must be >= 7");
  if (config_.max_health <= 0 || config_.max_ammo <= 0) throw DimensionError("mini_deathmatch: max health/ammo must be positive");
}

ObsShape MiniDeathmatch::observation_shape() const { return {5, config_.size, config_.size}; }

bool MiniDeathmatch::is_wall(Cell c) const {
  const int n = static_cast<int>(config_.size);
  if (c.row <= 0 || c.col <= 0 || c.row >= n - 1 || c.col >= n - 1) return true;
  const int a = 2, b = n - 3;
  return (c.row == a || c.row == b) && (c.col == a || c.col == b);
}

bool MiniDeathmatch::occupied(Cell c) const {
  if (is_wall(c) || c == agent_) return true;
  return std::any_of(enemies_.begin(), enemies_.end(), [&](const Enemy& e) { return e.alive && e.pos == c; });
}

MiniDeathmatch::Cell MiniDeathmatch::random_free_cell(int min_distance_from_agent) {
  const int n = static_cast<int>(config_.size);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Cell c{static_cast<int>(rng_.below(static_cast<std::uint64_t>(n))), static_cast<int>(rng_.below(static_cast<std::uint64_t>(n)))};
    if (occupied(c) || c == health_item_ || c == ammo_item_) continue;
    if (std::abs(c.row - agent_.row) + std::abs(c.col - agent_.col) < min_distance_from_agent) continue;
    return c;
  }
  // Arena too crowded for the distance constraint; take the first free cell.
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      if (!occupied({r, c})) return {r, c};
    }
  }
  throw StateError("mini_deathmatch: no free cell");
}

bool MiniDeathmatch::in_view(Cell c) const {
  const int dr = c.row - agent_.row, dc = c.col - agent_.col;
  int forward = 0, lateral = 0;
  switch (facing_) {
    case 0: forward = -dr; lateral = dc; break;
    case 1: forward = dc; lateral = dr; break;
    case 2: forward = dr; lateral = -dc; break;
    default: forward = -dc; lateral = -dr; break;
  }
  return forward >= 1 && std::abs(lateral) <= forward && forward <= static_cast<int>(config_.view_range);
}

std::size_t MiniDeathmatch::visible_enemy_count() const {
  return static_cast<std::size_t>(
      std::count_if(enemies_.begin(), enemies_.end(), [&](const Enemy& e) { return e.alive && in_view(e.pos); }));
}

bool MiniDeathmatch::clear_line(Cell a, Cell b) const {
  if (a.row != b.row && a.col != b.col) return false;
  const int dr = (b.row > a.row) - (b.row < a.row), dc = (b.col > a.col) - (b.col < a.col);
  for (Cell c{a.row + dr, a.col + dc}; !(c == b); c = {c.row + dr, c.col + dc}) {
    if (is_wall(c)) return false;
  }
  return true;
}

void MiniDeathmatch::respawn_agent() {
  agent_ = {-1, -1};
  agent_ = random_free_cell(0);
  facing_ = static_cast<int>(rng_.below(4));
  health_ = config_.max_health;
  ammo_ = config_.start_ammo;
}

Observation MiniDeathmatch::reset(std::uint64_t seed) {
  rng_.reseed(seed);
  tic_ = 0;
  done_ = false;
  kills_ = deaths_ = 0;
  enemies_.clear();
  health_item_ = ammo_item_ = {-1, -1};
  respawn_agent();
  for (std::size_t i = 0; i < config_.enemies; ++i) {
    Enemy e;
    e.pos = random_free_cell(3);
    enemies_.push_back(e);
  }
  health_item_ = random_free_cell(0);
  ammo_item_ = random_free_cell(0);
  return observe();
}

void MiniDeathmatch::place_agent(Cell pos, int facing) {
  agent_ = pos;
  facing_ = facing;
}

void MiniDeathmatch::place_enemy(std::size_t index, Cell pos) {
  enemies_.at(index).pos = pos;
  enemies_.at(index).alive = true;
}

StepResult MiniDeathmatch::step(std::size_t action) {
  check_step(action);
  StepResult result;
  ++tic_;
  result.info.tics = 1;
  result.reward = config_.living_reward;

  switch (action) {
    case kTurnLeft:
      facing_ = (facing_ + 3) % 4;
      break;
    case kTurnRight:
      facing_ = (facing_ + 1) % 4;
      break;
    case kForward: {
      const Cell next{agent_.row + kRowStep[facing_], agent_.col + kColStep[facing_]};
      if (!occupied(next)) {
        agent_ = next;
        if (agent_ == health_item_) {
          health_ = std::min(config_.max_health, health_ + config_.health_pack);
          result.reward += config_.pickup_reward;
          health_item_ = {-1, -1};
          health_item_ = random_free_cell(0);
        } else if (agent_ == ammo_item_) {
          ammo_ = std::min(config_.max_ammo, ammo_ + config_.ammo_pack);
          result.reward += config_.pickup_reward;
          ammo_item_ = {-1, -1};
          ammo_item_ = random_free_cell(0);
        }
      }
      break;
    }
    case kShoot: {
      bool hit = false;
      if (ammo_ > 0) {
        --ammo_;
        for (Cell c{agent_.row + kRowStep[facing_], agent_.col + kColStep[facing_]}; !is_wall(c);
             c = {c.row + kRowStep[facing_], c.col + kColStep[facing_]}) {
          auto it = std::find_if(enemies_.begin(), enemies_.end(), [&](const Enemy& e) { return e.alive && e.pos == c; });
          if (it != enemies_.end()) {
            it->alive = false;
            it->respawn_in = config_.respawn_delay;
            hit = true;
            break;
          }
        }
      }
      if (hit) {
        result.reward += config_.kill_reward;
        result.info.kills = 1;
        ++kills_;
      } else {
        result.reward -= config_.wasted_shot_penalty;
      }
      break;
    }
    default:
      break;
  }

  for (auto& e : enemies_) {
    if (!e.alive) continue;
    const int dist = std::abs(e.pos.row - agent_.row) + std::abs(e.pos.col - agent_.col);
    if (dist <= static_cast<int>(config_.enemy_range) && clear_line(e.pos, agent_)) {
      if (rng_.bernoulli(config_.enemy_shoot_prob)) {
        const int lost = std::min(health_, config_.enemy_damage);
        health_ -= lost;
        result.reward -= config_.damage_penalty * lost;
        if (health_ <= 0) {
          result.reward += config_.death_penalty;
          result.info.deaths += 1;
          ++deaths_;
          respawn_agent();
        }
      }
    } else if (rng_.bernoulli(config_.enemy_move_prob)) {
      const int dir = static_cast<int>(rng_.below(4));
      const Cell next{e.pos.row + kRowStep[dir], e.pos.col + kColStep[dir]};
      if (!occupied(next)) e.pos = next;
    }
  }
  for (auto& e : enemies_) {
    if (e.alive || --e.respawn_in > 0) continue;
    e.pos = random_free_cell(3);
    e.alive = true;
  }

  if (tic_ >= config_.max_tics) {
    done_ = true;
    result.info.timeout = true;
  }
  result.done = done_;
  result.observation = observe();
  result.features = game_features();
  return result;
}

GameFeatures MiniDeathmatch::game_features() const {
  return {static_cast<double>(health_) / config_.max_health, static_cast<double>(ammo_) / config_.max_ammo,
          config_.enemies ? static_cast<double>(visible_enemy_count()) / static_cast<double>(config_.enemies) : 0.0};
}

Observation MiniDeathmatch::observe() const {
  const ObsShape s = observation_shape();
  Observation obs{s, std::vector<double>(s.size(), 0.0)};
  auto set = [&](std::size_t c, Cell cell) {
    obs.planes[(c * s.height + static_cast<std::size_t>(cell.row)) * s.width + static_cast<std::size_t>(cell.col)] = 1.0;
  };
  const int n = static_cast<int>(config_.size);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      if (is_wall({r, c})) set(0, {r, c});
    }
  }
  for (const auto& e : enemies_) {
    if (e.alive && in_view(e.pos)) set(1, e.pos);
  }
  set(2, agent_);
  const Cell ahead{agent_.row + kRowStep[facing_], agent_.col + kColStep[facing_]};
  if (ahead.row >= 0 && ahead.col >= 0 && ahead.row < n && ahead.col < n) set(3, ahead);
  for (const Cell item : {health_item_, ammo_item_}) {
    if (item.row >= 0 && in_view(item)) set(4, item);
  }
  return obs;
}

std::string MiniDeathmatch::render_ascii() const {
  const int n = static_cast<int>(config_.size);
  std::string out;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const Cell cell{r, c};
      char ch = is_wall(cell) ? '#' : '.';
      if (cell == health_item_) ch = '+';
      if (cell == ammo_item_) ch = 'a';
      for (const auto& e : enemies_) {
        if (e.alive && e.pos == cell) ch = 'M';
      }
      if (cell == agent_) ch = '@';
      out += ch;
    }
    out += '\n';
  }
  return out;
}

std::string MiniDeathmatch::state_key() const {
  std::ostringstream out;
  out << "mini_deathmatch tic=" << tic_ << " done=" << done_ << " agent=" << agent_.row << ',' << agent_.col
      << " facing=" << facing_ << " hp=" << health_ << " ammo=" << ammo_ << " k=" << kills_ << " d=" << deaths_;
  for (const auto& e : enemies_) out << " e=" << e.pos.row << ',' << e.pos.col << ',' << e.alive << ',' << e.respawn_in;
  out << " items=" << health_item_.row << ',' << health_item_.col << ',' << ammo_item_.row << ',' << ammo_item_.col;
  for (auto s : rng_.state()) out << ' ' << s;
  return out.str();
}

// ------------------------------------------------------------------ Hallway

Hallway::Hallway(HallwayConfig config) : config_(config) {
  if (config_.length < 2 || config_.max_tics < 1) throw DimensionError("hallway: length must be >= 2, max_tics >= 1");
}

ObsShape Hallway::observation_shape() const { return {4, 3, config_.length}; }

Observation Hallway::reset(std::uint64_t seed) {
  rng_.reseed(seed);
  tic_ = 0;
  done_ = false;
  pos_ = 0;
  goal_up_ = rng_.below(2) == 0;
  return observe();
}

StepResult Hallway::step(std::size_t action) {
  check_step(action);
  StepResult result;
  ++tic_;
  result.info.tics = 1;
  const bool at_junction = pos_ + 1 == config_.length;
  if (action == kForward) {
    if (!at_junction) ++pos_;
  } else if (at_junction) {
    done_ = true;
    result.info.success = (action == kUp) == goal_up_;
    result.reward = result.info.success ? 1.0 : 0.0;
  }
  if (!done_ && tic_ >= config_.max_tics) {
    done_ = true;
    result.info.timeout = true;
  }
  result.done = done_;
  result.observation = observe();
  result.features = game_features();
  return result;
}

Observation Hallway::observe() const {
  const ObsShape s = observation_shape();
  Observation obs{s, std::vector<double>(s.size(), 0.0)};
  auto set = [&](std::size_t c, std::size_t h, std::size_t w) { obs.planes[(c * s.height + h) * s.width + w] = 1.0; };
  for (std::size_t w = 0; w + 1 < s.width; ++w) {
    set(0, 0, w);
    set(0, 2, w);
  }
  if (tic_ == 0) {
    const std::size_t cue = goal_up_ ? 1 : 2;
    for (std::size_t h = 0; h < s.height; ++h) {
      for (std::size_t w = 0; w < s.width; ++w) set(cue, h, w);
    }
  }
  set(3, 1, pos_);
  return obs;
}

std::string Hallway::render_ascii() const {
  std::string top(config_.length, '#'), mid(config_.length, '.'), bottom(config_.length, '#');
  top.back() = bottom.back() = '.';
  mid[pos_] = '@';
  return top + "\n" + mid + "\n" + bottom + "\n";
}

std::string Hallway::state_key() const {
  std::ostringstream out;
  out << "hallway tic=" << tic_ << " done=" << done_ << " pos=" << pos_ << " up=" << goal_up_;
  for (auto s : rng_.state()) out << ' ' << s;
  return out.str();
}

}  // namespace seqrl
