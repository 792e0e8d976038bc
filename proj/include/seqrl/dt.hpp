#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "seqrl/adam.hpp"
#include "seqrl/envs.hpp"
#include "seqrl/policy.hpp"
#include "seqrl/qlearning.hpp"
#include "seqrl/trajstore.hpp"
#include "seqrl/transformer.hpp"

namespace seqrl {

/// rtg[t] = r[t] + gamma * rtg[t+1], evaluated back to front.
std::vector<double> compute_rtg(std::span<const double> rewards, double gamma);

struct DTConfig {
  /// context_len counts timesteps; the transformer sees 3x as many tokens.
  TransformerConfig transformer{.d_model = 64, .n_heads = 8, .n_layers = 5, .d_ff = 256, .context_len = 90};
  std::size_t conv1_filters = 8;
  std::size_t conv2_filters = 16;
  /// Returns-to-go are divided by this before embedding.
  double rtg_scale = 100.0;
  double gamma = 1.0;
  AdamConfig adam{.lr = 1e-4};
  std::size_t batch_size = 64;
  std::size_t epochs = 100;
  double grad_clip = 1.0;
  /// 0 selects the argmax action at rollout time; > 0 samples.
  double temperature = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Batch of right-padded windows; slot (b, t) is at index b * length + t.
struct DTWindow {
  std::size_t batch = 0;
  std::size_t length = 0;
  ObsShape shape;
  std::vector<double> rtg;
  std::vector<double> observations;
  /// Action of each slot; index |A| marks "not known yet".
  std::vector<std::size_t> actions;
  std::vector<std::uint8_t> mask;
};

/// Tokens [B x 3K x d] ordered (RTG, state, action) per timestep, plus the
/// state-token positions whose outputs predict each timestep's action.
struct TokenSequence {
  Tensor tokens;
  std::vector<std::size_t> prediction_slots;
};

class DecisionTransformer {
 public:
  DecisionTransformer(const DTConfig& config, ObsShape shape, std::size_t actions, std::uint64_t seed);
  DecisionTransformer(const DTConfig& config, ObsShape shape, std::size_t actions, ParameterStore store);

  TokenSequence build_token_sequence(const DTWindow& window) const;
  /// Action logits [B x K x A] read at the state tokens.
  Tensor forward(const DTWindow& window) const;

  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  const DTConfig& config() const { return config_; }
  std::size_t action_count() const { return actions_; }
  ObsShape observation_shape() const { return shape_; }

 private:
  void bind(Rng& rng);

  DTConfig config_;
  ObsShape shape_;
  std::size_t actions_;
  ParameterStore store_;
  EncoderParams encoder_;
  Tensor rtg_weight_, rtg_bias_, action_table_;
  std::vector<BlockParams> blocks_;
  Tensor final_gain_, final_bias_, head_weight_, head_bias_;
};

/// Logits [K x A] for a single window.
Tensor dt_forward(const DecisionTransformer& model, const DTWindow& window);

/// Cross entropy against the dataset actions over real slots.
Tensor dt_loss(const Tensor& logits, std::span<const std::size_t> actions, std::span<const std::uint8_t> mask);

/// Window of `length` timesteps starting at `start`, right-padded when the
/// trajectory ends first.
DTWindow make_window(const Trajectory& trajectory, ObsShape shape, std::size_t start, std::size_t length,
                     double gamma);
/// Stacks equally long single windows into one batch.
DTWindow concat_windows(const std::vector<DTWindow>& windows);

struct DTTrainResult {
  std::vector<double> epoch_losses;
  std::uint64_t gradient_steps = 0;
};

/// Epochs over shuffled trajectories, one uniformly placed window each.
DTTrainResult train_dt(DecisionTransformer& model, const Dataset& dataset, const DTConfig& config,
                       const MetricsSink& sink = {});

/// Return-conditioned acting: the running return-to-go starts at
/// `target_return` and drops by each received reward.
class DTPolicy final : public Policy {
 public:
  DTPolicy(const DecisionTransformer& model, double target_return) : model_(model), target_return_(target_return) {}

  void begin_episode(const Observation& first) override;
  std::size_t act(const Observation& obs, Rng& rng) override;
  void observe(const StepResult& result) override;

  double current_rtg() const { return rtg_; }

 private:
  const DecisionTransformer& model_;
  double target_return_;
  double rtg_ = 0.0;
  std::deque<double> rtgs_;
  std::deque<Observation> observations_;
  std::deque<std::size_t> actions_;
};

struct DTRolloutResult {
  double episode_return = 0.0;
  bool timeout = false;
  Trajectory trajectory;
};

DTRolloutResult dt_rollout(Environment& env, const DecisionTransformer& model, double target_return,
                           std::size_t max_steps, std::size_t frame_skip, std::uint64_t seed);

}  // namespace seqrl
