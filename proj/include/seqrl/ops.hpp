#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "seqrl/tensor.hpp"

// Differentiable ops. Each returns a fresh tensor and, when any input
// requires a gradient, records how to push gradients back into its inputs.

namespace seqrl {

/// Square boolean matrix; allowed(i, j) says whether query i may attend key j.
struct AttentionMask {
  std::size_t size = 0;
  std::vector<std::uint8_t> allowed;

  bool operator()(std::size_t i, std::size_t j) const { return allowed[i * size + j] != 0; }
  std::size_t count_allowed() const;
};

Tensor matmul(const Tensor& a, const Tensor& b);

/// x[..., in] . weight[in x out] (+ bias[out]); leading dims are flattened.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});

/// Elementwise sum. `b` may also have a shape equal to a trailing suffix of
/// `a`'s shape, in which case it is broadcast over the leading dims.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor minimum(const Tensor& a, const Tensor& b);
/// Gradient passes only where lo < x < hi.
Tensor clamp(const Tensor& x, double lo, double hi);

Tensor relu(const Tensor& x);
/// Exact (erf) GELU.
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);
/// Log-softmax along the last axis.
Tensor log_softmax(const Tensor& x);

/// Normalizes the last dimension, then applies gain and bias.
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// Valid cross-correlation of input [C x H x W] or [N x C x H x W] with
/// kernels [F x C x kh x kw]; optional bias [F].
Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride = 1, std::size_t padding = 0,
              const Tensor& bias = {});

/// Multi-head scaled dot-product attention over q, k, v [B x T x d]; heads
/// split d into contiguous column blocks. Masked logits are -inf.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                 const AttentionMask* mask = nullptr);

/// Attention probabilities [B x heads x T x T] for inspection (no graph).
std::vector<double> attention_weights(const Tensor& q, const Tensor& k, std::size_t heads,
                                      const AttentionMask* mask = nullptr);

Tensor reshape(const Tensor& x, Shape shape);
/// Drops `axis` by taking one index along it.
Tensor select(const Tensor& x, std::size_t axis, std::size_t index);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
/// Stacks equally shaped tensors along a new axis.
Tensor stack(const std::vector<Tensor>& xs, std::size_t axis);

/// Embedding lookup: rows of table [V x d] -> [n x d].
Tensor take_rows(const Tensor& table, std::span<const std::size_t> rows);
/// x[rows[i], cols[i]] for a rank-2 x -> [n].
Tensor pick(const Tensor& x, std::span<const std::size_t> rows, std::span<const std::size_t> cols);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Mean squared error; `target` is treated as a constant.
Tensor mse(const Tensor& pred, const Tensor& target);
/// Mean over the batch of -log softmax(logits)[target].
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);

}  // namespace seqrl
