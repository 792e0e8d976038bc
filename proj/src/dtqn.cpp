#include "seqrl/dtqn.hpp"

#include "seqrl/error.hpp"
#include "seqrl/ops.hpp"

namespace seqrl {

DTQN::DTQN(const DTQNConfig& config, ObsShape shape, std::size_t actions, std::uint64_t seed)
    : config_(config), shape_(shape), actions_(actions), store_(true) {
  Rng rng(seed);
  bind(rng);
}

DTQN::DTQN(const DTQNConfig& config, ObsShape shape, std::size_t actions, ParameterStore store)
    : config_(config), shape_(shape), actions_(actions), store_(std::move(store)) {
  Rng rng(0);
  const std::size_t before = store_.size();
  bind(rng);
  if (store_.size() != before) throw DimensionError("DTQN: parameter store is missing entries for this configuration");
}

void DTQN::bind(Rng& rng) {
  config_.transformer.validate();
  if (actions_ == 0) throw DimensionError("DTQN: action count must be positive");
  const std::size_t d = config_.transformer.d_model;
  EncoderConfig enc;
  enc.channels = shape_.channels;
  enc.height = shape_.height;
  enc.width = shape_.width;
  enc.conv1_filters = config_.conv1_filters;
  enc.conv2_filters = config_.conv2_filters;
  enc.d_model = d;
  encoder_ = EncoderParams::declare(store_, "encoder", enc, rng);
  blocks_.clear();
  for (std::size_t i = 0; i < config_.transformer.n_layers; ++i) {
    blocks_.push_back(BlockParams::declare(store_, "block" + std::to_string(i), config_.transformer, rng));
  }
  final_gain_ = store_.declare("final_ln.gain", {d}, init::constant(1.0), rng);
  final_bias_ = store_.declare("final_ln.bias", {d}, init::zeros(), rng);
  q_weight_ = store_.declare("q_head.weight", {d, actions_}, init::xavier_uniform(0.01), rng);
  q_bias_ = store_.declare("q_head.bias", {actions_}, init::zeros(), rng);
  if (config_.features_head) {
    f_weight_ = store_.declare("features_head.weight", {d, 3}, init::xavier_uniform(), rng);
    f_bias_ = store_.declare("features_head.bias", {3}, init::zeros(), rng);
  }
}

QOutput DTQN::forward(const Tensor& frames) const {
  if (frames.rank() != 5) throw DimensionError("DTQN: expected frames [B,L,C,H,W], got " + shape_str(frames.shape()));
  const std::size_t length = frames.size(1);
  if (length > config_.transformer.context_len) {
    throw DimensionError("DTQN: window of " + std::to_string(length) + " exceeds context length " +
                         std::to_string(config_.transformer.context_len));
  }
  Tensor h = add(encode_observations(frames, encoder_), positional_encoding(length, config_.transformer.d_model));
  const AttentionMask mask = causal_mask(length);
  for (const auto& block : blocks_) h = transformer_block(h, block, config_.transformer, &mask);
  QOutput out;
  out.embeddings = layernorm(h, final_gain_, final_bias_);
  out.q = linear(out.embeddings, q_weight_, q_bias_);
  if (config_.features_head) out.features = linear(out.embeddings, f_weight_, f_bias_);
  return out;
}

std::unique_ptr<QNetwork> DTQN::frozen_copy() const {
  return std::make_unique<DTQN>(config_, shape_, actions_, store_.clone(false));
}

QOutput q_forward(const QNetwork& net, const Tensor& frames) {
  if (frames.rank() != 4) throw DimensionError("q_forward: expected frames [T,C,H,W], got " + shape_str(frames.shape()));
  Shape batched = frames.shape();
  batched.insert(batched.begin(), 1);
  QOutput out = net.forward(reshape(frames, batched));
  const std::size_t t = frames.size(0);
  out.q = reshape(out.q, {t, out.q.size(2)});
  out.embeddings = reshape(out.embeddings, {t, out.embeddings.size(2)});
  if (out.features.defined()) out.features = reshape(out.features, {t, 3});
  return out;
}

}  // namespace seqrl
