#pragma once

#include <cstddef>
#include <string>

#include "seqrl/ops.hpp"
#include "seqrl/params.hpp"

namespace seqrl {

enum class Gating { ResidualAdd, GruGate };

Gating parse_gating(const std::string& name);
std::string gating_name(Gating gating);

struct TransformerConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 8;
  std::size_t n_layers = 5;
  std::size_t d_ff = 256;
  std::size_t context_len = 50;
  Gating gating = Gating::GruGate;
  /// Initial value of the gate bias; z = sigmoid(... - bias) so a positive
  /// value starts the gate mostly closed.
  double gate_bias = 2.0;

  void validate() const;
};

/// PE[pos, 2i] = sin(pos / 10000^(2i/d)), PE[pos, 2i+1] = cos(...).
Tensor positional_encoding(std::size_t length, std::size_t width);

/// Lower-triangular mask: position i may attend to j <= i.
AttentionMask causal_mask(std::size_t length);

struct AttentionParams {
  Tensor wq, wk, wv, wo, bo;
};

/// GRU-style gate replacing the residual connection.
struct GateParams {
  Tensor wr, ur, wz, uz, wg, ug, bg;
};

struct FeedForwardParams {
  Tensor w1, b1, w2, b2;
};

struct BlockParams {
  Tensor ln1_gain, ln1_bias;
  AttentionParams attention;
  GateParams gate1;
  Tensor ln2_gain, ln2_bias;
  FeedForwardParams feed_forward;
  GateParams gate2;

  static BlockParams declare(ParameterStore& store, const std::string& prefix, const TransformerConfig& config,
                             Rng& rng);
};

/// Input x is [T x d] or [B x T x d]; the result has the same shape.
Tensor multi_head_attention(const Tensor& x, const AttentionParams& params, std::size_t n_heads,
                            const AttentionMask* mask);

/// r = s(Wr y + Ur x); z = s(Wz y + Uz x - bg); h = tanh(Wg y + Ug (r . x));
/// out = (1 - z) . x + z . h, with x the residual stream and y the sublayer.
Tensor gru_gate(const Tensor& x, const Tensor& y, const GateParams& params);

Tensor feed_forward(const Tensor& x, const FeedForwardParams& params);

/// Pre-norm block: LN -> attention -> gate, LN -> GELU MLP -> gate.
Tensor transformer_block(const Tensor& x, const BlockParams& params, const TransformerConfig& config,
                         const AttentionMask* mask);

/// Convolutional frame encoder: two 3x3 conv layers with ReLU, then a
/// linear projection of the flattened maps to d_model.
struct EncoderConfig {
  std::size_t channels = 0, height = 0, width = 0;
  std::size_t conv1_filters = 8;
  std::size_t conv2_filters = 16;
  std::size_t kernel = 3;
  std::size_t padding = 1;
  std::size_t d_model = 64;
};

struct EncoderParams {
  EncoderConfig config;
  Tensor conv1, conv1_bias, conv2, conv2_bias, proj, proj_bias;

  static EncoderParams declare(ParameterStore& store, const std::string& prefix, const EncoderConfig& config,
                               Rng& rng);
};

/// frames [T x C x H x W] -> [T x d_model], or [B x T x C x H x W] ->
/// [B x T x d_model]. The same weights encode every frame.
Tensor encode_observations(const Tensor& frames, const EncoderParams& params);

}  // namespace seqrl
