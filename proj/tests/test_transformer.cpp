#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "seqrl/error.hpp"
#include "seqrl/ops.hpp"
#include "seqrl/transformer.hpp"
#include "support.hpp"

namespace seqrl {
namespace {

using test::bit_identical;
using test::gradient_check;
using test::random_tensor;

TransformerConfig small_config(Gating gating = Gating::GruGate) {
  TransformerConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers = 1;
  c.d_ff = 16;
  c.context_len = 6;
  c.gating = gating;
  return c;
}

TEST(PositionalEncoding, FirstRowAlternatesZeroOne) {
  const Tensor pe = positional_encoding(3, 6);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(pe.at(i), i % 2 == 0 ? 0.0 : 1.0);
}

TEST(PositionalEncoding, PositionOneDimZeroIsSinOne) {
  EXPECT_NEAR(positional_encoding(2, 4).at(4), 0.841471, 1e-6);
}

TEST(PositionalEncoding, MatchesFormulaAndStaysInRange) {
  for (std::size_t d : {2u, 4u, 10u, 32u}) {
    const Tensor pe = positional_encoding(17, d);
    for (std::size_t pos = 0; pos < 17; ++pos) {
      for (std::size_t k = 0; k < d; ++k) {
        const double angle = static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(k - k % 2) / d);
        const double want = k % 2 == 0 ? std::sin(angle) : std::cos(angle);
        const double got = pe.at(pos * d + k);
        EXPECT_NEAR(got, want, 1e-12);
        EXPECT_LE(std::abs(got), 1.0);
      }
    }
  }
}

TEST(PositionalEncoding, OddWidthRejected) {
  EXPECT_THROW(positional_encoding(3, 5), DimensionError);
  EXPECT_THROW(positional_encoding(0, 4), DimensionError);
}

TEST(PositionalEncoding, Deterministic) {
  EXPECT_TRUE(bit_identical(positional_encoding(9, 12).data(), positional_encoding(9, 12).data()));
}

TEST(CausalMask, SingleToken) {
  const AttentionMask m = causal_mask(1);
  EXPECT_TRUE(m(0, 0));
}

TEST(CausalMask, LowerTriangularOfThree) {
  const AttentionMask m = causal_mask(3);
  EXPECT_EQ(m.count_allowed(), 6u);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(m(i, j), j <= i);
  }
}

TEST(CausalMask, AllowedCountMatchesCounting) {
  Rng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t t = 1 + rng.below(64);
    std::size_t expected = 0;
    for (std::size_t i = 0; i < t; ++i) expected += i + 1;
    EXPECT_EQ(causal_mask(t).count_allowed(), expected);
  }
}

AttentionParams random_attention(std::size_t d, Rng& rng) {
  return {random_tensor({d, d}, rng), random_tensor({d, d}, rng), random_tensor({d, d}, rng),
          random_tensor({d, d}, rng), random_tensor({d}, rng)};
}

TEST(MultiHeadAttention, SingleTokenIsProjectedValue) {
  Rng rng(3);
  const AttentionParams p = random_attention(4, rng);
  const Tensor x = random_tensor({1, 4}, rng);
  const Tensor y = multi_head_attention(x, p, 2, nullptr);
  const Tensor want = linear(linear(x, p.wv), p.wo, p.bo);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y.at(i), want.at(i), 1e-12);
}

TEST(MultiHeadAttention, TwoTokenOneHeadHandOracle) {
  const AttentionParams p{Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0}), Tensor({2, 2}, {0.5, 0.0, 0.0, 2.0}),
                          Tensor({2, 2}, {1.0, 1.0, 0.0, 1.0}), Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0}),
                          Tensor({2}, {0.0, 0.0})};
  const Tensor x({2, 2}, {1.0, 0.0, 0.0, 1.0});
  const Tensor y = multi_head_attention(x, p, 1, nullptr);
  // q = x; k rows (0.5, 0), (0, 2); v rows (1, 1), (0, 1); scale 1/sqrt(2)
  const double s = 1.0 / std::sqrt(2.0);
  const double a0 = std::exp(0.5 * s) / (std::exp(0.5 * s) + 1.0);
  const double a1 = 1.0 / (1.0 + std::exp(2.0 * s));
  const double want[4] = {a0, 1.0, a1, 1.0};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y.at(i), want[i], 1e-9);
}

TEST(MultiHeadAttention, RowsSumToOne) {
  Rng rng(5);
  const Tensor q = random_tensor({2, 7, 8}, rng, false, -3.0, 3.0);
  const Tensor k = random_tensor({2, 7, 8}, rng, false, -3.0, 3.0);
  const AttentionMask mask = causal_mask(7);
  for (const AttentionMask* m : {static_cast<const AttentionMask*>(nullptr), &mask}) {
    const auto w = attention_weights(q, k, 4, m);
    for (std::size_t row = 0; row < w.size() / 7; ++row) {
      const double s = std::accumulate(w.begin() + row * 7, w.begin() + row * 7 + 7, 0.0);
      EXPECT_NEAR(s, 1.0, 1e-12);
      if (m) {
        for (std::size_t j = row % 7 + 1; j < 7; ++j) EXPECT_EQ(w[row * 7 + j], 0.0);
      }
    }
  }
}

TEST(MultiHeadAttention, FuturePerturbationLeavesPastBitIdentical) {
  Rng rng(8);
  const AttentionParams p = random_attention(8, rng);
  const AttentionMask mask = causal_mask(6);
  Tensor x = random_tensor({6, 8}, rng, false);
  const Tensor before = multi_head_attention(x, p, 4, &mask);
  for (std::size_t t = 0; t + 1 < 6; ++t) {
    Tensor moved = x.clone(false);
    for (std::size_t i = (t + 1) * 8; i < 48; ++i) moved.data_mut()[i] += 1.0 + rng.uniform();
    const Tensor after = multi_head_attention(moved, p, 4, &mask);
    EXPECT_TRUE(bit_identical(before.data().subspan(0, (t + 1) * 8), after.data().subspan(0, (t + 1) * 8)));
  }
}

TEST(MultiHeadAttention, IndivisibleHeadsRejected) {
  Rng rng(1);
  const AttentionParams p = random_attention(6, rng);
  EXPECT_THROW(multi_head_attention(random_tensor({2, 6}, rng), p, 4, nullptr), DimensionError);
}

GateParams random_gate(std::size_t d, double bias, Rng& rng) {
  return {random_tensor({d, d}, rng), random_tensor({d, d}, rng), random_tensor({d, d}, rng),
          random_tensor({d, d}, rng), random_tensor({d, d}, rng), random_tensor({d, d}, rng),
          Tensor({d}, bias, true)};
}

// tanh(y Wg + (r . x) Ug) with r = sigmoid(y Wr + x Ur), in plain loops.
std::vector<double> gate_candidate(const Tensor& x, const Tensor& y, const GateParams& p) {
  const std::size_t d = x.size(1), t = x.size(0);
  auto row_times = [&](const std::vector<double>& v, std::size_t row, const Tensor& w, std::size_t col) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += v[row * d + i] * w.at(i * d + col);
    return s;
  };
  const std::vector<double> xv(x.data().begin(), x.data().end()), yv(y.data().begin(), y.data().end());
  std::vector<double> rx(t * d), out(t * d);
  for (std::size_t r = 0; r < t; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const double pre = row_times(yv, r, p.wr, c) + row_times(xv, r, p.ur, c);
      rx[r * d + c] = xv[r * d + c] / (1.0 + std::exp(-pre));
    }
  }
  for (std::size_t r = 0; r < t; ++r) {
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] = std::tanh(row_times(yv, r, p.wg, c) + row_times(rx, r, p.ug, c));
  }
  return out;
}

TEST(GruGate, ClosedGatePassesResidual) {
  Rng rng(4);
  const GateParams p = random_gate(5, 1e3, rng);
  const Tensor x = random_tensor({3, 5}, rng), y = random_tensor({3, 5}, rng);
  const Tensor out = gru_gate(x, y, p);
  for (std::size_t i = 0; i < 15; ++i) EXPECT_NEAR(out.at(i), x.at(i), 1e-12);
}

TEST(GruGate, OpenGateGivesCandidate) {
  Rng rng(6);
  const GateParams p = random_gate(5, -1e3, rng);
  const Tensor x = random_tensor({3, 5}, rng), y = random_tensor({3, 5}, rng);
  const Tensor out = gru_gate(x, y, p);
  const auto h = gate_candidate(x, y, p);
  for (std::size_t i = 0; i < 15; ++i) EXPECT_NEAR(out.at(i), h[i], 1e-12);
}

TEST(GruGate, GradientMatchesFiniteDifferences) {
  Rng rng(7);
  for (int trial = 0; trial < 3; ++trial) {
    const GateParams p = random_gate(4, 0.5, rng);
    const Tensor x = random_tensor({3, 4}, rng), y = random_tensor({3, 4}, rng);
    const auto w = test::probe_weights(gru_gate(x, y, p), 70 + trial);
    const auto r = gradient_check([&] { return test::probe_loss(gru_gate(x, y, p), w); },
                                  {x, y, p.wr, p.ur, p.wz, p.uz, p.wg, p.ug, p.bg}, rng);
    EXPECT_LT(r.max_relative_error, 1e-4);
  }
}

TEST(GruGate, ShapeMismatchRejected) {
  Rng rng(2);
  const GateParams p = random_gate(4, 2.0, rng);
  EXPECT_THROW(gru_gate(random_tensor({3, 4}, rng), random_tensor({2, 4}, rng), p), DimensionError);
}

TEST(TransformerBlock, ResidualWithZeroOutputWeightsIsIdentity) {
  Rng rng(9);
  const TransformerConfig c = small_config(Gating::ResidualAdd);
  ParameterStore store;
  BlockParams p = BlockParams::declare(store, "b", c, rng);
  for (Tensor t : {p.attention.wo, p.attention.bo, p.feed_forward.w2, p.feed_forward.b2}) {
    for (double& v : t.data_mut()) v = 0.0;
  }
  const AttentionMask mask = causal_mask(5);
  const Tensor x = random_tensor({5, 8}, rng);
  EXPECT_TRUE(bit_identical(transformer_block(x, p, c, &mask).data(), x.data()));
}

TEST(TransformerBlock, FreshGruBlockStaysCloseToInput) {
  Rng rng(10);
  TransformerConfig c = small_config();
  c.d_model = 32;
  c.n_heads = 4;
  c.d_ff = 64;
  ParameterStore store;
  const BlockParams p = BlockParams::declare(store, "b", c, rng);
  const AttentionMask mask = causal_mask(6);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = random_tensor({6, 32}, rng, false);
    for (std::size_t r = 0; r < 6; ++r) {
      double n = 0.0;
      for (std::size_t i = 0; i < 32; ++i) n += x.at(r * 32 + i) * x.at(r * 32 + i);
      for (std::size_t i = 0; i < 32; ++i) x.data_mut()[r * 32 + i] /= std::sqrt(n);
    }
    const Tensor y = transformer_block(x, p, c, &mask);
    for (std::size_t r = 0; r < 6; ++r) {
      double diff = 0.0;
      for (std::size_t i = 0; i < 32; ++i) diff += std::pow(y.at(r * 32 + i) - x.at(r * 32 + i), 2);
      EXPECT_LT(std::sqrt(diff), 0.5);
    }
  }
}

TEST(TransformerBlock, FiveLayerStackIsCausal) {
  Rng rng(12);
  for (Gating g : {Gating::GruGate, Gating::ResidualAdd}) {
    const TransformerConfig c = small_config(g);
    ParameterStore store;
    std::vector<BlockParams> blocks;
    for (int i = 0; i < 5; ++i) blocks.push_back(BlockParams::declare(store, "b" + std::to_string(i), c, rng));
    const AttentionMask mask = causal_mask(6);
    auto run = [&](const Tensor& x) {
      Tensor h = x;
      for (const auto& b : blocks) h = transformer_block(h, b, c, &mask);
      return h;
    };
    const Tensor x = random_tensor({2, 6, 8}, rng, false);
    const Tensor before = run(x);
    for (std::size_t t = 0; t + 1 < 6; ++t) {
      Tensor moved = x.clone(false);
      for (std::size_t b = 0; b < 2; ++b) {
        for (std::size_t i = (t + 1) * 8; i < 48; ++i) moved.data_mut()[b * 48 + i] -= 2.0 * rng.uniform();
      }
      const Tensor after = run(moved);
      for (std::size_t b = 0; b < 2; ++b) {
        EXPECT_TRUE(bit_identical(before.data().subspan(b * 48, (t + 1) * 8), after.data().subspan(b * 48, (t + 1) * 8)));
      }
    }
  }
}

TEST(TransformerBlock, GradientMatchesFiniteDifferences) {
  Rng rng(13);
  const TransformerConfig c = small_config();
  ParameterStore store;
  const BlockParams p = BlockParams::declare(store, "b", c, rng);
  const AttentionMask mask = causal_mask(4);
  const Tensor x = random_tensor({4, 8}, rng);
  const auto w = test::probe_weights(transformer_block(x, p, c, &mask), 99);
  const auto r = gradient_check([&] { return test::probe_loss(transformer_block(x, p, c, &mask), w); },
                                {x, p.attention.wq, p.attention.wv, p.gate1.bg, p.feed_forward.w1, p.ln2_gain}, rng,
                                1e-5, 12);
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(TransformerConfig, ValidationRejectsBadShapes) {
  TransformerConfig c = small_config();
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), DimensionError);
  c = small_config();
  c.context_len = 0;
  EXPECT_THROW(c.validate(), DimensionError);
  c = small_config();
  c.n_layers = 0;
  EXPECT_THROW(c.validate(), DimensionError);
  EXPECT_NO_THROW(small_config().validate());
}

EncoderParams small_encoder(ParameterStore& store, Rng& rng) {
  EncoderConfig e;
  e.channels = 2;
  e.height = 4;
  e.width = 5;
  e.conv1_filters = 3;
  e.conv2_filters = 4;
  e.d_model = 6;
  return EncoderParams::declare(store, "enc", e, rng);
}

TEST(Encoder, IdenticalFramesGiveIdenticalRows) {
  Rng rng(14);
  ParameterStore store;
  const EncoderParams p = small_encoder(store, rng);
  const Tensor frame = random_tensor({2, 4, 5}, rng, false, 0.0, 1.0);
  std::vector<double> v(frame.data().begin(), frame.data().end());
  v.insert(v.end(), frame.data().begin(), frame.data().end());
  const Tensor emb = encode_observations(Tensor({2, 2, 4, 5}, v), p);
  ASSERT_EQ(emb.shape(), (Shape{2, 6}));
  EXPECT_TRUE(bit_identical(emb.data().subspan(0, 6), emb.data().subspan(6, 6)));
}

TEST(Encoder, OutputShapeAndBatching) {
  Rng rng(15);
  ParameterStore store;
  const EncoderParams p = small_encoder(store, rng);
  const Tensor frames = random_tensor({3, 7, 2, 4, 5}, rng, false, 0.0, 1.0);
  const Tensor emb = encode_observations(frames, p);
  EXPECT_EQ(emb.shape(), (Shape{3, 7, 6}));
  const Tensor single = encode_observations(reshape(slice(frames, 0, 1, 2), {7, 2, 4, 5}), p);
  EXPECT_TRUE(bit_identical(emb.data().subspan(42, 42), single.data()));
}

TEST(Encoder, GradientReachesConvKernels) {
  Rng rng(16);
  ParameterStore store;
  const EncoderParams p = small_encoder(store, rng);
  const Tensor frames = random_tensor({3, 2, 4, 5}, rng, false, 0.0, 1.0);
  sum(encode_observations(frames, p)).backward();
  for (const Tensor& k : {p.conv1, p.conv2}) {
    ASSERT_TRUE(k.has_grad());
    double norm = 0.0;
    for (double g : k.grad()) norm += g * g;
    EXPECT_GT(norm, 0.0);
  }
}

TEST(Encoder, FrameShapeMismatchRejected) {
  Rng rng(17);
  ParameterStore store;
  const EncoderParams p = small_encoder(store, rng);
  EXPECT_THROW(encode_observations(Tensor(Shape{3, 2, 4, 4}), p), DimensionError);
  EXPECT_THROW(encode_observations(Tensor(Shape{2, 4, 5}), p), DimensionError);
}

}  // namespace
}  // namespace seqrl
