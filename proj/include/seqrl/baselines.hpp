#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "seqrl/adam.hpp"
#include "seqrl/envs.hpp"
#include "seqrl/policy.hpp"
#include "seqrl/qlearning.hpp"
#include "seqrl/transformer.hpp"

namespace seqrl {

// ------------------------------------------------------------------- LSTM

struct LSTMParams {
  std::size_t hidden = 0;
  Tensor input_weight;      // in x 4h, gate order i, f, g, o
  Tensor recurrent_weight;  // h x 4h
  Tensor bias;              // 4h, forget slice starts at +1

  static LSTMParams declare(ParameterStore& store, const std::string& prefix, std::size_t input, std::size_t hidden,
                            Rng& rng);
};

/// c' = f . c + i . g, h' = o . tanh(c'). x is [B x in] (or [in]), h and c
/// are [B x hidden] (or [hidden]).
std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h, const Tensor& c, const LSTMParams& params);

// ------------------------------------------------------------------- DRQN

struct DRQNConfig {
  std::size_t embed_dim = 64;
  std::size_t hidden = 64;
  std::size_t context_len = 50;
  std::size_t conv1_filters = 8;
  std::size_t conv2_filters = 16;
};

/// Recurrent Q-network: conv encoder per frame, LSTM unrolled from a zero
/// state over the window, Q head per step.
class DRQN final : public QNetwork {
 public:
  DRQN(const DRQNConfig& config, ObsShape shape, std::size_t actions, std::uint64_t seed);
  DRQN(const DRQNConfig& config, ObsShape shape, std::size_t actions, ParameterStore store);

  QOutput forward(const Tensor& frames) const override;
  ParameterStore& params() override { return store_; }
  const ParameterStore& params() const override { return store_; }
  std::size_t action_count() const override { return actions_; }
  std::size_t context_len() const override { return config_.context_len; }
  ObsShape observation_shape() const override { return shape_; }
  bool has_features_head() const override { return false; }
  std::unique_ptr<QNetwork> frozen_copy() const override;

  const DRQNConfig& config() const { return config_; }

 private:
  void bind(Rng& rng);

  DRQNConfig config_;
  ObsShape shape_;
  std::size_t actions_;
  ParameterStore store_;
  EncoderParams encoder_;
  LSTMParams lstm_;
  Tensor q_weight_, q_bias_;
};

/// Q values [T x A] for one window [T x C x H x W].
Tensor drqn_forward(const DRQN& net, const Tensor& frames);

// -------------------------------------------------------------------- PPO

struct PPOConfig {
  std::size_t hidden = 128;
  std::uint64_t total_steps = 90000;
  std::size_t n_envs = 4;
  /// Decisions per update, summed over all environment instances.
  std::size_t horizon = 2048;
  std::size_t epochs = 4;
  std::size_t minibatch = 256;
  double gamma = 0.99;
  double lambda = 0.95;
  double clip = 0.2;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double max_grad_norm = 0.5;
  /// Multiplies rewards before advantage estimation; logged returns stay unscaled.
  double reward_scale = 0.01;
  AdamConfig adam{.lr = 1e-3};
  std::size_t frame_skip = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PPOOutput {
  Tensor logits;  // N x A
  Tensor value;   // N
};

/// Shared tanh MLP over flattened observations with policy and value heads.
class PPOModel {
 public:
  PPOModel(std::size_t hidden, ObsShape shape, std::size_t actions, std::uint64_t seed);
  PPOModel(std::size_t hidden, ObsShape shape, std::size_t actions, ParameterStore store);

  /// observations [N x C*H*W].
  PPOOutput forward(const Tensor& observations) const;
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  std::size_t action_count() const { return actions_; }
  ObsShape observation_shape() const { return shape_; }

 private:
  void bind(Rng& rng);

  std::size_t hidden_;
  ObsShape shape_;
  std::size_t actions_;
  ParameterStore store_;
  Tensor w1_, b1_, w2_, b2_, pi_w_, pi_b_, v_w_, v_b_;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> targets;
};

/// delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t,
/// A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}, targets = A + V.
/// `bootstrap` is V after the last step.
GaeResult ppo_gae(std::span<const double> rewards, std::span<const double> values, std::span<const std::uint8_t> dones,
                  double bootstrap, double gamma, double lambda);

struct PPOLossTerms {
  Tensor total;
  Tensor policy;
  Tensor value;
  Tensor entropy;
};

/// -mean(min(rho A, clip(rho, 1-eps, 1+eps) A)) + c_v MSE(V, targets)
/// - c_e entropy, rho = exp(new - old). Advantages are used as given.
PPOLossTerms ppo_clip_loss(const Tensor& new_log_probs, std::span<const double> old_log_probs,
                           std::span<const double> advantages, const Tensor& values,
                           std::span<const double> value_targets, const Tensor& entropy, double clip, double value_coef,
                           double entropy_coef);

/// Mean entropy of the categorical distributions in logits [N x A].
Tensor categorical_entropy(const Tensor& logits);

/// Rescales to mean 0, std 1 (population std; left centred if the std is 0).
std::vector<double> normalize_advantages(std::span<const double> advantages);

struct PPOTrainResult {
  std::uint64_t steps = 0;
  std::uint64_t episodes = 0;
  std::vector<double> update_returns;
  std::vector<double> entropies;
};

PPOTrainResult train_ppo(PPOModel& model, const EnvSettings& env, const PPOConfig& config,
                         const MetricsSink& sink = {});

/// Samples from the policy head, or takes its argmax when `greedy`.
class PPOPolicy final : public Policy {
 public:
  explicit PPOPolicy(const PPOModel& model, bool greedy = false) : model_(model), greedy_(greedy) {}
  std::size_t act(const Observation& obs, Rng& rng) override;

 private:
  const PPOModel& model_;
  bool greedy_;
};

}  // namespace seqrl
