#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "seqrl/envs.hpp"
#include "seqrl/qlearning.hpp"
#include "seqrl/transformer.hpp"

namespace seqrl {

struct DTQNConfig {
  TransformerConfig transformer;
  std::size_t conv1_filters = 8;
  std::size_t conv2_filters = 16;
  /// Auxiliary head predicting (health, ammo, visible enemies).
  bool features_head = true;
};

/// Deep Transformer Q-Network: conv frame encoder, sinusoidal positions,
/// causal transformer blocks, final layernorm, per-position Q head.
class DTQN final : public QNetwork {
 public:
  /// Freshly initialized, trainable parameters.
  DTQN(const DTQNConfig& config, ObsShape shape, std::size_t actions, std::uint64_t seed);
  /// Binds to an existing store (checkpoint or target copy).
  DTQN(const DTQNConfig& config, ObsShape shape, std::size_t actions, ParameterStore store);

  QOutput forward(const Tensor& frames) const override;
  ParameterStore& params() override { return store_; }
  const ParameterStore& params() const override { return store_; }
  std::size_t action_count() const override { return actions_; }
  std::size_t context_len() const override { return config_.transformer.context_len; }
  ObsShape observation_shape() const override { return shape_; }
  bool has_features_head() const override { return config_.features_head; }
  std::unique_ptr<QNetwork> frozen_copy() const override;

  const DTQNConfig& config() const { return config_; }

 private:
  void bind(Rng& rng);

  DTQNConfig config_;
  ObsShape shape_;
  std::size_t actions_;
  ParameterStore store_;
  EncoderParams encoder_;
  std::vector<BlockParams> blocks_;
  Tensor final_gain_, final_bias_, q_weight_, q_bias_, f_weight_, f_bias_;
};

/// frames [T x C x H x W] -> Q [T x A] and embeddings [T x d_model].
QOutput q_forward(const QNetwork& net, const Tensor& frames);

}  // namespace seqrl
