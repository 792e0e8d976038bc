#include "seqrl/transformer.hpp"

#include <cmath>

#include "seqrl/error.hpp"

namespace seqrl {

Gating parse_gating(const std::string& name) {
  if (name == "gru") return Gating::GruGate;
  if (name == "residual") return Gating::ResidualAdd;
  throw DimensionError("unknown gating '" + name + "' (expected gru or residual)");
}

std::string gating_name(Gating gating) { return gating == Gating::GruGate ? "gru" : "residual"; }

void TransformerConfig::validate() const {
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw DimensionError("d_model " + std::to_string(d_model) + " not divisible by n_heads " + std::to_string(n_heads));
  }
  if (context_len < 1) throw DimensionError("context_len must be >= 1");
  if (n_layers < 1) throw DimensionError("n_layers must be >= 1");
  if (d_model < 2 || d_model % 2 != 0) throw DimensionError("d_model must be even for positional encoding");
}

Tensor positional_encoding(std::size_t length, std::size_t width) {
  if (length < 1) throw DimensionError("positional_encoding: length must be >= 1");
  if (width < 2 || width % 2 != 0) {
    throw DimensionError("positional_encoding: width must be even and >= 2, got " + std::to_string(width));
  }
  std::vector<double> pe(length * width);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < width / 2; ++i) {
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(width));
      pe[pos * width + 2 * i] = std::sin(angle);
      pe[pos * width + 2 * i + 1] = std::cos(angle);
    }
  }
  return Tensor({length, width}, std::move(pe));
}

AttentionMask causal_mask(std::size_t length) {
  AttentionMask mask{length, std::vector<std::uint8_t>(length * length, 0)};
  for (std::size_t i = 0; i < length; ++i) {
    for (std::size_t j = 0; j <= i; ++j) mask.allowed[i * length + j] = 1;
  }
  return mask;
}

namespace {

GateParams declare_gate(ParameterStore& store, const std::string& prefix, std::size_t d, double bias, Rng& rng) {
  const auto w = init::xavier_uniform(0.25);
  return {store.declare(prefix + ".wr", {d, d}, w, rng), store.declare(prefix + ".ur", {d, d}, w, rng),
          store.declare(prefix + ".wz", {d, d}, w, rng), store.declare(prefix + ".uz", {d, d}, w, rng),
          store.declare(prefix + ".wg", {d, d}, w, rng), store.declare(prefix + ".ug", {d, d}, w, rng),
          store.declare(prefix + ".bg", {d}, init::constant(bias), rng)};
}

// Views [T x d] as [1 x T x d] so every path below works on rank 3.
Tensor as_batched(const Tensor& x) {
  if (x.rank() == 3) return x;
  if (x.rank() == 2) return reshape(x, {1, x.size(0), x.size(1)});
  throw DimensionError("expected [T,d] or [B,T,d], got " + shape_str(x.shape()));
}

Tensor restore_rank(const Tensor& y, const Tensor& like) { return like.rank() == 2 ? reshape(y, like.shape()) : y; }

}  // namespace

BlockParams BlockParams::declare(ParameterStore& store, const std::string& prefix, const TransformerConfig& config,
                                 Rng& rng) {
  const std::size_t d = config.d_model, f = config.d_ff;
  const auto w = init::xavier_uniform();
  BlockParams p;
  p.ln1_gain = store.declare(prefix + ".ln1.gain", {d}, init::constant(1.0), rng);
  p.ln1_bias = store.declare(prefix + ".ln1.bias", {d}, init::zeros(), rng);
  p.attention = {store.declare(prefix + ".attn.wq", {d, d}, w, rng), store.declare(prefix + ".attn.wk", {d, d}, w, rng),
                 store.declare(prefix + ".attn.wv", {d, d}, w, rng), store.declare(prefix + ".attn.wo", {d, d}, w, rng),
                 store.declare(prefix + ".attn.bo", {d}, init::zeros(), rng)};
  if (config.gating == Gating::GruGate) p.gate1 = declare_gate(store, prefix + ".gate1", d, config.gate_bias, rng);
  p.ln2_gain = store.declare(prefix + ".ln2.gain", {d}, init::constant(1.0), rng);
  p.ln2_bias = store.declare(prefix + ".ln2.bias", {d}, init::zeros(), rng);
  p.feed_forward = {store.declare(prefix + ".ff.w1", {d, f}, w, rng), store.declare(prefix + ".ff.b1", {f}, init::zeros(), rng),
                    store.declare(prefix + ".ff.w2", {f, d}, w, rng), store.declare(prefix + ".ff.b2", {d}, init::zeros(), rng)};
  if (config.gating == Gating::GruGate) p.gate2 = declare_gate(store, prefix + ".gate2", d, config.gate_bias, rng);
  return p;
}

Tensor multi_head_attention(const Tensor& x, const AttentionParams& params, std::size_t n_heads,
                            const AttentionMask* mask) {
  const Tensor xb = as_batched(x);
  const std::size_t d = xb.size(2);
  if (n_heads == 0 || d % n_heads != 0) {
    throw DimensionError("multi_head_attention: d_model " + std::to_string(d) + " not divisible by " +
                         std::to_string(n_heads) + " heads");
  }
  const Tensor q = linear(xb, params.wq);
  const Tensor k = linear(xb, params.wk);
  const Tensor v = linear(xb, params.wv);
  const Tensor heads = attention(q, k, v, n_heads, mask);
  return restore_rank(linear(heads, params.wo, params.bo), x);
}

Tensor gru_gate(const Tensor& x, const Tensor& y, const GateParams& p) {
  if (x.shape() != y.shape()) {
    throw DimensionError("gru_gate: residual " + shape_str(x.shape()) + " and sublayer " + shape_str(y.shape()) +
                         " differ");
  }
  const Tensor r = sigmoid(add(linear(y, p.wr), linear(x, p.ur)));
  const Tensor z = sigmoid(add(add(linear(y, p.wz), linear(x, p.uz)), scale(p.bg, -1.0)));
  const Tensor h = tanh(add(linear(y, p.wg), linear(mul(r, x), p.ug)));
  // (1 - z) . x + z . h == x + z . (h - x)
  return add(x, mul(z, sub(h, x)));
}

Tensor feed_forward(const Tensor& x, const FeedForwardParams& p) {
  return linear(gelu(linear(x, p.w1, p.b1)), p.w2, p.b2);
}

Tensor transformer_block(const Tensor& x, const BlockParams& p, const TransformerConfig& config,
                         const AttentionMask* mask) {
  const Tensor attn = multi_head_attention(layernorm(x, p.ln1_gain, p.ln1_bias), p.attention, config.n_heads, mask);
  const Tensor mid = config.gating == Gating::GruGate ? gru_gate(x, attn, p.gate1) : add(x, attn);
  const Tensor ff = feed_forward(layernorm(mid, p.ln2_gain, p.ln2_bias), p.feed_forward);
  return config.gating == Gating::GruGate ? gru_gate(mid, ff, p.gate2) : add(mid, ff);
}

EncoderParams EncoderParams::declare(ParameterStore& store, const std::string& prefix, const EncoderConfig& c,
                                     Rng& rng) {
  if (c.channels == 0 || c.height == 0 || c.width == 0) throw DimensionError("encoder: observation dims must be positive");
  const auto w = init::xavier_uniform();
  EncoderParams p;
  p.config = c;
  p.conv1 = store.declare(prefix + ".conv1", {c.conv1_filters, c.channels, c.kernel, c.kernel}, w, rng);
  p.conv1_bias = store.declare(prefix + ".conv1_bias", {c.conv1_filters}, init::zeros(), rng);
  p.conv2 = store.declare(prefix + ".conv2", {c.conv2_filters, c.conv1_filters, c.kernel, c.kernel}, w, rng);
  p.conv2_bias = store.declare(prefix + ".conv2_bias", {c.conv2_filters}, init::zeros(), rng);
  const std::size_t oh = c.height + 2 * c.padding - c.kernel + 1, ow = c.width + 2 * c.padding - c.kernel + 1;
  const std::size_t oh2 = oh + 2 * c.padding - c.kernel + 1, ow2 = ow + 2 * c.padding - c.kernel + 1;
  p.proj = store.declare(prefix + ".proj", {c.conv2_filters * oh2 * ow2, c.d_model}, w, rng);
  p.proj_bias = store.declare(prefix + ".proj_bias", {c.d_model}, init::zeros(), rng);
  return p;
}

Tensor encode_observations(const Tensor& frames, const EncoderParams& p) {
  const auto& c = p.config;
  const std::size_t r = frames.rank();
  if (r != 4 && r != 5) throw DimensionError("encode_observations: expected [T,C,H,W] or [B,T,C,H,W], got " + shape_str(frames.shape()));
  const std::size_t off = r - 3;
  if (frames.size(off) != c.channels || frames.size(off + 1) != c.height || frames.size(off + 2) != c.width) {
    throw DimensionError("encode_observations: frames " + shape_str(frames.shape()) + " do not match encoder input [" +
                         std::to_string(c.channels) + "x" + std::to_string(c.height) + "x" + std::to_string(c.width) + "]");
  }
  std::size_t count = 1;
  for (std::size_t i = 0; i < off; ++i) count *= frames.size(i);
  const Tensor flat = reshape(frames, {count, c.channels, c.height, c.width});
  const Tensor h1 = relu(conv2d(flat, p.conv1, 1, c.padding, p.conv1_bias));
  const Tensor h2 = relu(conv2d(h1, p.conv2, 1, c.padding, p.conv2_bias));
  const Tensor emb = linear(reshape(h2, {count, h2.numel() / count}), p.proj, p.proj_bias);
  Shape out(frames.shape().begin(), frames.shape().begin() + static_cast<std::ptrdiff_t>(off));
  out.push_back(c.d_model);
  return reshape(emb, out);
}

}  // namespace seqrl
