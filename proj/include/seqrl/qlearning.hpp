#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "seqrl/adam.hpp"
#include "seqrl/envs.hpp"
#include "seqrl/metrics.hpp"
#include "seqrl/params.hpp"
#include "seqrl/policy.hpp"
#include "seqrl/tensor.hpp"

// Machinery shared by the sequence Q-learning agents (DTQN and DRQN).

namespace seqrl {

/// Windows of transitions, left-padded to a common length L.
struct SequenceBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  ObsShape shape;
  std::vector<double> observations;       // B x L x C x H x W
  std::vector<double> next_observations;  // B x L x C x H x W
  std::vector<std::size_t> actions;       // B x L
  std::vector<double> rewards;            // B x L
  std::vector<std::uint8_t> dones;        // B x L, true termination only
  std::vector<std::uint8_t> mask;         // B x L, 1 for real slots
  std::vector<double> features;           // B x L x 3

  std::size_t slots() const { return batch * length; }
  std::size_t real_slots() const;
  Tensor observation_tensor() const;
  Tensor next_observation_tensor() const;
};

/// Fixed-capacity ring of transitions tagged with episode ids.
class SequenceReplayBuffer {
 public:
  SequenceReplayBuffer(std::size_t capacity, ObsShape shape);

  /// `terminal` marks a true episode end (no bootstrap); `episode_end` also
  /// covers timeouts and starts a new episode id for the next push.
  void push(const Observation& obs, std::size_t action, double reward, const Observation& next_obs, bool terminal,
            const GameFeatures& features, bool episode_end);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  const ObsShape& shape() const { return shape_; }

  /// Logical index 0 is the oldest stored transition.
  std::uint64_t episode_id(std::size_t index) const { return episode_[slot(index)]; }
  std::size_t action(std::size_t index) const { return actions_[slot(index)]; }
  double reward(std::size_t index) const { return rewards_[slot(index)]; }
  bool terminal(std::size_t index) const { return terminal_[slot(index)] != 0; }
  void copy_observation(std::size_t index, double* out) const;
  void copy_next_observation(std::size_t index, double* out) const;
  GameFeatures features(std::size_t index) const { return features_[slot(index)]; }

  /// First logical index of the window of at most `length` transitions that
  /// ends at `end` and stays inside one episode.
  std::size_t window_start(std::size_t end, std::size_t length) const;

 private:
  std::size_t slot(std::size_t index) const { return (start_ + index) % capacity_; }

  std::size_t capacity_;
  ObsShape shape_;
  std::size_t start_ = 0;
  std::size_t size_ = 0;
  std::uint64_t current_episode_ = 0;
  std::vector<std::uint8_t> observations_;
  std::vector<std::uint8_t> next_observations_;
  std::vector<std::size_t> actions_;
  std::vector<double> rewards_;
  std::vector<std::uint8_t> terminal_;
  std::vector<GameFeatures> features_;
  std::vector<std::uint64_t> episode_;
};

/// Draws B window end-points uniformly; each window is the <= L transitions
/// ending there within one episode, left-padded with zero frames. Slot k of
/// the next window ends at the successor of slot k's transition; when the
/// window is padded, the slot before the first real one holds the window's
/// first observation.
SequenceBatch sample_minibatch(const SequenceReplayBuffer& buffer, std::size_t batch, std::size_t length, Rng& rng);

/// Per real slot: r + gamma * max_a' next_q[slot][a'], or r at terminal
/// slots. Padded slots get 0. next_q is [B x L x A].
std::vector<double> bellman_targets(const SequenceBatch& batch, const Tensor& next_q, double gamma);

/// Mean over real slots of (q[slot][action] - target)^2.
Tensor td_loss(const Tensor& q, std::span<const std::size_t> actions, std::span<const double> targets,
               std::span<const std::uint8_t> mask);

/// Mean squared error of predicted features [B x L x 3] over real slots.
Tensor aux_features_loss(const Tensor& predicted, std::span<const double> features, std::span<const std::uint8_t> mask);

/// Lowest index among the maxima.
std::size_t argmax(std::span<const double> values);

/// With probability epsilon a uniform action, otherwise argmax(q).
std::size_t epsilon_greedy(std::span<const double> q, double epsilon, Rng& rng);

/// Same draws as above, but q is only computed when the greedy branch is
/// taken.
std::size_t epsilon_greedy(std::size_t actions, double epsilon, Rng& rng, const std::function<std::vector<double>()>& q);

/// Linear anneal from `start` at step 0 to `end` at `horizon`, flat after.
double linear_epsilon(std::uint64_t step, double start, double end, std::uint64_t horizon);

struct QOutput {
  Tensor q;           // B x L x A
  Tensor embeddings;  // B x L x d
  Tensor features;    // B x L x 3, undefined without a features head
};

/// A sequence Q-network over left-padded observation windows.
class QNetwork {
 public:
  virtual ~QNetwork() = default;

  /// frames is [B x L x C x H x W].
  virtual QOutput forward(const Tensor& frames) const = 0;
  virtual ParameterStore& params() = 0;
  virtual const ParameterStore& params() const = 0;
  virtual std::size_t action_count() const = 0;
  virtual std::size_t context_len() const = 0;
  virtual ObsShape observation_shape() const = 0;
  virtual bool has_features_head() const = 0;
  /// Structurally identical copy whose parameters do not require grads.
  virtual std::unique_ptr<QNetwork> frozen_copy() const = 0;
};

/// Hard copy of every main parameter into the target network.
void sync_target(const QNetwork& main, QNetwork& target);

/// Q values at the last position of a left-padded window holding `history`
/// (oldest first, at most context_len frames).
std::vector<double> q_values_for_history(const QNetwork& net, const std::deque<Observation>& history);

struct QLearningConfig {
  std::uint64_t total_steps = 50000;
  std::size_t batch_size = 32;
  std::size_t buffer_capacity = 100000;
  std::size_t train_interval = 4;
  std::size_t learning_starts = 1000;
  std::size_t target_sync = 1000;
  double gamma = 0.99;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  std::uint64_t epsilon_horizon = 20000;
  double aux_weight = 0.5;
  double grad_clip = 0.0;
  AdamConfig adam;
  std::size_t frame_skip = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

struct QTrainResult {
  std::uint64_t steps = 0;
  std::uint64_t episodes = 0;
  std::uint64_t gradient_steps = 0;
  std::vector<double> td_losses;
  std::vector<double> aux_losses;
};

using MetricsSink = std::function<void(const MetricsRow&)>;

/// Online training loop: epsilon-greedy acting through frame_skip_step,
/// replay, Bellman regression against a periodically synced target network.
/// Emits one metrics row per finished episode.
QTrainResult train_q_network(QNetwork& net, const EnvSettings& env, const QLearningConfig& config,
                             const MetricsSink& sink = {});

/// Greedy (or epsilon) policy over a sliding history window.
class QPolicy final : public Policy {
 public:
  explicit QPolicy(const QNetwork& net, double epsilon = 0.0) : net_(net), epsilon_(epsilon) {}

  void begin_episode(const Observation& first) override;
  std::size_t act(const Observation& obs, Rng& rng) override;

 private:
  const QNetwork& net_;
  double epsilon_;
  std::deque<Observation> history_;
};

}  // namespace seqrl
