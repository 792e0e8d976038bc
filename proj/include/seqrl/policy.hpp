#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "seqrl/envs.hpp"
#include "seqrl/rng.hpp"

namespace seqrl {

/// Action selector driven one decision at a time. Sequence policies keep
/// their own history between begin_episode() calls.
class Policy {
 public:
  virtual ~Policy() = default;

  virtual void begin_episode(const Observation& first) { (void)first; }
  virtual std::size_t act(const Observation& obs, Rng& rng) = 0;
  /// Called after every decision with the resulting (frame-skipped) step.
  virtual void observe(const StepResult& result) { (void)result; }
};

/// Index drawn from softmax(logits) with one uniform draw.
std::size_t sample_categorical(std::span<const double> logits, Rng& rng);

class RandomPolicy final : public Policy {
 public:
  explicit RandomPolicy(std::size_t actions) : actions_(actions) {}
  std::size_t act(const Observation&, Rng& rng) override { return static_cast<std::size_t>(rng.below(actions_)); }

 private:
  std::size_t actions_;
};

/// Scripted GridBasic expert.
class ExpertPolicy final : public Policy {
 public:
  std::size_t act(const Observation& obs, Rng&) override { return grid_basic_expert_action(obs); }
};

struct EpisodeRecord {
  std::vector<Observation> observations;
  std::vector<std::size_t> actions;
  std::vector<double> rewards;
  double episode_return = 0.0;
  int kills = 0;
  int deaths = 0;
  bool success = false;
  bool timeout = false;
};

/// Plays one episode from `seed` with frame skip k. When `record` is false
/// only the totals are kept.
EpisodeRecord run_episode(Environment& env, Policy& policy, std::uint64_t seed, std::size_t frame_skip, Rng& rng,
                          bool record = false, std::size_t max_decisions = 0);

struct EvalSummary {
  std::size_t episodes = 0;
  double mean_return = 0.0;
  double success_rate = 0.0;
  std::int64_t kills = 0;
  std::int64_t deaths = 0;
  double kd_ratio = 0.0;
  std::vector<double> returns;
};

/// Runs `episodes` evaluation episodes with seeds drawn from `seed`.
EvalSummary evaluate_policy(const EnvSettings& settings, Policy& policy, std::size_t episodes, std::uint64_t seed,
                            std::size_t frame_skip);

}  // namespace seqrl
