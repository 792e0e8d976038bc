#include "seqrl/policy.hpp"

#include <algorithm>
#include <cmath>

#include "seqrl/error.hpp"
#include "seqrl/metrics.hpp"

namespace seqrl {

std::size_t sample_categorical(std::span<const double> logits, Rng& rng) {
  if (logits.empty()) throw DimensionError("sample_categorical: empty logits");
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> w(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) total += w[i] = std::exp(logits[i] - top);
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (u < w[i]) return i;
    u -= w[i];
  }
  return w.size() - 1;
}

EpisodeRecord run_episode(Environment& env, Policy& policy, std::uint64_t seed, std::size_t frame_skip, Rng& rng,
                          bool record, std::size_t max_decisions) {
  EpisodeRecord episode;
  Observation obs = env.reset(seed);
  policy.begin_episode(obs);
  std::size_t decisions = 0;
  while (!env.done()) {
    if (max_decisions && decisions == max_decisions) {
      episode.timeout = true;
      break;
    }
    const std::size_t action = policy.act(obs, rng);
    StepResult result = frame_skip_step(env, action, frame_skip);
    ++decisions;
    if (record) {
      episode.observations.push_back(obs);
      episode.actions.push_back(action);
      episode.rewards.push_back(result.reward);
    }
    episode.episode_return += result.reward;
    episode.kills += result.info.kills;
    episode.deaths += result.info.deaths;
    episode.success = episode.success || result.info.success;
    episode.timeout = result.info.timeout;
    policy.observe(result);
    obs = std::move(result.observation);
  }
  return episode;
}

EvalSummary evaluate_policy(const EnvSettings& settings, Policy& policy, std::size_t episodes, std::uint64_t seed,
                            std::size_t frame_skip) {
  auto env = make_env(settings);
  Rng seeds(seed);
  Rng rng = seeds.split();
  EvalSummary summary;
  summary.episodes = episodes;
  double total = 0.0;
  std::size_t successes = 0;
  for (std::size_t i = 0; i < episodes; ++i) {
    const EpisodeRecord e = run_episode(*env, policy, seeds(), frame_skip, rng);
    summary.returns.push_back(e.episode_return);
    total += e.episode_return;
    successes += e.success ? 1 : 0;
    summary.kills += e.kills;
    summary.deaths += e.deaths;
  }
  if (episodes) {
    summary.mean_return = total / static_cast<double>(episodes);
    summary.success_rate = static_cast<double>(successes) / static_cast<double>(episodes);
  }
  summary.kd_ratio = kd_ratio(summary.kills, summary.deaths);
  return summary;
}

}  // namespace seqrl
