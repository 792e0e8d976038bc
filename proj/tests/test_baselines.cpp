#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "seqrl/baselines.hpp"
#include "seqrl/error.hpp"
#include "support.hpp"

namespace seqrl {
namespace {

using test::bit_identical;
using test::gradient_check;
using test::random_tensor;

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct LstmFixture {
  ParameterStore store{true};
  Rng rng{1};
  LSTMParams p;
  LstmFixture(std::size_t in, std::size_t hidden) { p = LSTMParams::declare(store, "lstm", in, hidden, rng); }
};

// ------------------------------------------------------------------- LSTM

TEST(Lstm, ForgetBiasStartsAtOne) {
  LstmFixture f(3, 4);
  const auto b = f.p.bias.data();
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(b[i], (i >= 4 && i < 8) ? 1.0 : 0.0) << i;
}

TEST(Lstm, ZeroParametersHalveTheCell) {
  LstmFixture f(2, 3);
  for (auto& t : f.store.tensors()) std::fill(t.data_mut().begin(), t.data_mut().end(), 0.0);
  const Tensor x({2}, {0.3, -0.7});
  const Tensor h({3}, {0.1, 0.2, 0.3});
  const Tensor c({3}, {1.0, -2.0, 4.0});
  const auto [h1, c1] = lstm_cell(x, h, c, f.p);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_DOUBLE_EQ(c1.data()[k], 0.5 * c.data()[k]);
    EXPECT_DOUBLE_EQ(h1.data()[k], 0.5 * std::tanh(0.5 * c.data()[k]));
  }
}

TEST(Lstm, MatchesScalarLoopOracle) {
  const std::size_t in = 3, n = 4, batch = 2;
  LstmFixture f(in, n);
  Rng rng(2);
  for (auto& t : f.store.tensors()) {
    for (double& v : t.data_mut()) v = rng.uniform() * 2.0 - 1.0;
  }
  const Tensor x = random_tensor({batch, in}, rng, false);
  const Tensor h = random_tensor({batch, n}, rng, false);
  const Tensor c = random_tensor({batch, n}, rng, false);
  const auto [h1, c1] = lstm_cell(x, h, c, f.p);
  const auto wx = f.p.input_weight.data(), wh = f.p.recurrent_weight.data(), b = f.p.bias.data();
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t k = 0; k < n; ++k) {
      double z[4];
      for (std::size_t g = 0; g < 4; ++g) {
        const std::size_t col = g * n + k;
        double s = b[col];
        for (std::size_t i = 0; i < in; ++i) s += x.data()[r * in + i] * wx[i * 4 * n + col];
        for (std::size_t j = 0; j < n; ++j) s += h.data()[r * n + j] * wh[j * 4 * n + col];
        z[g] = s;
      }
      const double cn = sigm(z[1]) * c.data()[r * n + k] + sigm(z[0]) * std::tanh(z[2]);
      EXPECT_NEAR(c1.data()[r * n + k], cn, 1e-12);
      EXPECT_NEAR(h1.data()[r * n + k], sigm(z[3]) * std::tanh(cn), 1e-12);
    }
  }
}

TEST(Lstm, SaturatedGatesKeepTheCell) {
  LstmFixture f(2, 2);
  auto b = f.p.bias.data_mut();
  for (std::size_t k = 0; k < 2; ++k) {
    b[k] = -1e3;      // input gate shut
    b[2 + k] = 1e3;   // forget gate open
    b[6 + k] = 1e3;   // output gate open
  }
  const Tensor c({2}, {0.8, -1.5});
  const auto [h1, c1] = lstm_cell(Tensor({2}, {0.4, 0.4}), Tensor({2}, {0.0, 0.0}), c, f.p);
  EXPECT_DOUBLE_EQ(c1.data()[0], 0.8);
  EXPECT_DOUBLE_EQ(c1.data()[1], -1.5);
  EXPECT_DOUBLE_EQ(h1.data()[0], std::tanh(0.8));
  EXPECT_DOUBLE_EQ(h1.data()[1], std::tanh(-1.5));
}

TEST(Lstm, StateBoundsHoldOnRandomRollouts) {
  LstmFixture f(3, 5);
  Rng rng(3);
  Tensor h({5}), c({5});
  for (int step = 0; step < 200; ++step) {
    const Tensor x = random_tensor({3}, rng, false, -5.0, 5.0);
    const auto [h1, c1] = lstm_cell(x, h, c, f.p);
    for (std::size_t k = 0; k < 5; ++k) {
      EXPECT_LT(std::abs(h1.data()[k]), 1.0);
      EXPECT_LE(std::abs(c1.data()[k]), std::abs(c.data()[k]) + 1.0);
    }
    h = h1;
    c = c1;
  }
}

TEST(Lstm, GradientThroughThreeSteps) {
  LstmFixture f(3, 4);
  Rng rng(4);
  const Tensor x0 = random_tensor({2, 3}, rng), x1 = random_tensor({2, 3}, rng), x2 = random_tensor({2, 3}, rng);
  const Tensor h0 = random_tensor({2, 4}, rng), c0 = random_tensor({2, 4}, rng);
  const auto w = test::uniform_values(8, rng);
  auto loss = [&] {
    auto [h, c] = lstm_cell(x0, h0, c0, f.p);
    std::tie(h, c) = lstm_cell(x1, h, c, f.p);
    std::tie(h, c) = lstm_cell(x2, h, c, f.p);
    return add(test::probe_loss(h, w), sum(c));
  };
  std::vector<Tensor> inputs{x0, x1, x2, h0, c0};
  for (const auto& t : f.store.tensors()) inputs.push_back(t);
  const auto r = gradient_check(loss, inputs, rng);
  EXPECT_LT(r.max_relative_error, 1e-4);
  EXPECT_GT(r.checked, 100u);
}

TEST(Lstm, ShapeMismatchRejected) {
  LstmFixture f(3, 4);
  EXPECT_THROW(lstm_cell(Tensor({3}), Tensor({3}), Tensor({3}), f.p), DimensionError);
  EXPECT_THROW(lstm_cell(Tensor({2, 3}), Tensor({3, 4}), Tensor({3, 4}), f.p), DimensionError);
  ParameterStore store(true);
  Rng rng(0);
  EXPECT_THROW(LSTMParams::declare(store, "x", 0, 4, rng), DimensionError);
}

// ------------------------------------------------------------------- DRQN

constexpr ObsShape kShape{2, 3, 3};

DRQNConfig small_drqn(std::size_t context = 6) {
  DRQNConfig c;
  c.embed_dim = 8;
  c.hidden = 6;
  c.context_len = context;
  c.conv1_filters = 2;
  c.conv2_filters = 3;
  return c;
}

Tensor random_frames(std::size_t batch, std::size_t length, Rng& rng) {
  std::vector<double> v(batch * length * kShape.size());
  for (double& x : v) x = static_cast<double>(rng.below(2));
  return Tensor({batch, length, kShape.channels, kShape.height, kShape.width}, std::move(v));
}

TEST(Drqn, ShapesAndQHeadScale) {
  DRQN net(small_drqn(), kShape, 3, 1);
  Rng rng(5);
  const QOutput out = net.forward(random_frames(2, 5, rng));
  EXPECT_EQ(out.q.shape(), (Shape{2, 5, 3}));
  EXPECT_EQ(out.embeddings.shape(), (Shape{2, 5, 6}));
  EXPECT_FALSE(net.has_features_head());
  for (double q : out.q.data()) EXPECT_LT(std::abs(q), 0.1);
}

TEST(Drqn, PrefixOutputsMatchShorterWindows) {
  DRQN net(small_drqn(), kShape, 3, 2);
  Rng rng(6);
  const Tensor frames = random_frames(1, 6, rng);
  const Tensor full = net.forward(frames).q;
  for (std::size_t len = 1; len <= 6; ++len) {
    const Tensor part = net.forward(slice(frames, 1, 0, len)).q;
    EXPECT_TRUE(bit_identical(part.data(), full.data().subspan(0, len * 3))) << len;
  }
}

TEST(Drqn, FutureFramesDoNotLeakBackwards) {
  DRQN net(small_drqn(), kShape, 3, 3);
  Rng rng(7);
  const Tensor a = random_frames(1, 6, rng);
  std::vector<double> v(a.data().begin(), a.data().end());
  for (std::size_t i = 4 * kShape.size(); i < v.size(); ++i) v[i] = 1.0 - v[i];
  const Tensor b(a.shape(), v);
  const Tensor qa = net.forward(a).q, qb = net.forward(b).q;
  EXPECT_TRUE(bit_identical(qa.data().subspan(0, 12), qb.data().subspan(0, 12)));
  EXPECT_FALSE(bit_identical(qa.data().subspan(12), qb.data().subspan(12)));
}

TEST(Drqn, SingleWindowHelperAndFrozenCopy) {
  DRQN net(small_drqn(), kShape, 3, 4);
  Rng rng(8);
  const Tensor frames = random_frames(1, 4, rng);
  const Tensor q = drqn_forward(net, reshape(frames, {4, kShape.channels, kShape.height, kShape.width}));
  EXPECT_EQ(q.shape(), (Shape{4, 3}));
  EXPECT_TRUE(bit_identical(q.data(), net.forward(frames).q.data()));
  const auto frozen = net.frozen_copy();
  EXPECT_TRUE(bit_identical(frozen->forward(frames).q.data(), q.data()));
  for (const auto& t : frozen->params().tensors()) EXPECT_FALSE(t.requires_grad());
}

TEST(Drqn, InvalidWindowsRejected) {
  DRQN net(small_drqn(3), kShape, 3, 5);
  Rng rng(9);
  EXPECT_THROW(net.forward(random_frames(1, 4, rng)), DimensionError);
  EXPECT_THROW(net.forward(Tensor({3, 2, 3, 3})), DimensionError);
  EXPECT_THROW(DRQN(small_drqn(), kShape, 0, 1), DimensionError);
}

TEST(Drqn, TrainsDeterministically) {
  auto run = [](std::uint64_t seed) {
    EnvSettings env;
    env.kind = EnvKind::Hallway;
    env.hallway.length = 3;
    env.hallway.max_tics = 12;
    Hallway probe(env.hallway);
    DRQN net(small_drqn(), probe.observation_shape(), 3, seed);
    QLearningConfig q;
    q.total_steps = 200;
    q.batch_size = 4;
    q.buffer_capacity = 400;
    q.learning_starts = 40;
    q.target_sync = 10;
    q.epsilon_horizon = 150;
    q.frame_skip = 0;
    q.seed = seed;
    const QTrainResult r = train_q_network(net, env, q);
    EXPECT_TRUE(r.aux_losses.empty());
    for (double l : r.td_losses) EXPECT_TRUE(std::isfinite(l));
    return r.td_losses;
  };
  const auto a = run(1), b = run(1);
  ASSERT_FALSE(a.empty());
  EXPECT_TRUE(bit_identical(a, b));
}

// -------------------------------------------------------------------- GAE

std::vector<double> gae_oracle(const std::vector<double>& r, const std::vector<double>& v,
                               const std::vector<std::uint8_t>& d, double bootstrap, double gamma, double lambda) {
  const std::size_t n = r.size();
  std::vector<double> delta(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double next = t + 1 < n ? v[t + 1] : bootstrap;
    delta[t] = r[t] + gamma * next * (d[t] ? 0.0 : 1.0) - v[t];
  }
  std::vector<double> a(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double w = 1.0;
    for (std::size_t l = t; l < n; ++l) {
      a[t] += w * delta[l];
      if (d[l]) break;
      w *= gamma * lambda;
    }
  }
  return a;
}

TEST(Gae, SingleStep) {
  const std::vector<double> r{2.0}, v{0.5};
  const std::vector<std::uint8_t> d{0};
  const GaeResult g = ppo_gae(r, v, d, 3.0, 0.9, 0.95);
  EXPECT_DOUBLE_EQ(g.advantages[0], 2.0 + 0.9 * 3.0 - 0.5);
  EXPECT_DOUBLE_EQ(g.targets[0], 2.0 + 0.9 * 3.0);
  const std::vector<std::uint8_t> done{1};
  EXPECT_DOUBLE_EQ(ppo_gae(r, v, done, 3.0, 0.9, 0.95).advantages[0], 1.5);
}

TEST(Gae, LambdaZeroIsTdErrorAndLambdaOneIsMonteCarlo) {
  const std::vector<double> r{1.0, 0.0, 2.0, -1.0}, v{0.3, -0.2, 0.5, 0.1};
  const std::vector<std::uint8_t> d{0, 0, 0, 0};
  const double gamma = 0.9, boot = 0.7;
  const GaeResult g0 = ppo_gae(r, v, d, boot, gamma, 0.0);
  for (std::size_t t = 0; t < 4; ++t) {
    const double next = t + 1 < 4 ? v[t + 1] : boot;
    EXPECT_NEAR(g0.advantages[t], r[t] + gamma * next - v[t], 1e-12);
  }
  const GaeResult g1 = ppo_gae(r, v, d, boot, gamma, 1.0);
  for (std::size_t t = 0; t < 4; ++t) {
    double ret = 0.0, w = 1.0;
    for (std::size_t l = t; l < 4; ++l, w *= gamma) ret += w * r[l];
    ret += w * boot;
    EXPECT_NEAR(g1.targets[t], ret, 1e-12);
  }
}

TEST(Gae, DoneCutsPropagation) {
  const std::vector<double> r{0.0, 0.0, 5.0}, v{0.0, 0.0, 0.0};
  const std::vector<std::uint8_t> d{0, 1, 0};
  const GaeResult g = ppo_gae(r, v, d, 0.0, 0.99, 0.95);
  EXPECT_EQ(g.advantages[0], 0.0);
  EXPECT_EQ(g.advantages[1], 0.0);
  EXPECT_EQ(g.advantages[2], 5.0);
}

TEST(Gae, MatchesExplicitSumOnRandomInputs) {
  Rng rng(10);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.below(20);
    std::vector<double> r(n), v(n);
    std::vector<std::uint8_t> d(n);
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = rng.uniform() * 4.0 - 2.0;
      v[i] = rng.uniform() * 2.0 - 1.0;
      d[i] = rng.uniform() < 0.2 ? 1 : 0;
    }
    const double boot = rng.uniform(), gamma = rng.uniform(), lambda = rng.uniform();
    const GaeResult g = ppo_gae(r, v, d, boot, gamma, lambda);
    const auto a = gae_oracle(r, v, d, boot, gamma, lambda);
    for (std::size_t i = 0; i < n; ++i) {
      ASSERT_NEAR(g.advantages[i], a[i], 1e-10);
      ASSERT_NEAR(g.targets[i], a[i] + v[i], 1e-10);
    }
  }
}

TEST(Gae, LengthMismatchRejected) {
  const std::vector<double> r{1.0, 2.0}, v{1.0};
  const std::vector<std::uint8_t> d{0, 0};
  EXPECT_THROW(ppo_gae(r, v, d, 0.0, 0.9, 0.9), DimensionError);
}

// -------------------------------------------------------------------- PPO

struct LossCase {
  Tensor new_lp;
  std::vector<double> old_lp, adv, targets;
  Tensor values, entropy;
};

LossCase loss_case(std::vector<double> new_lp, std::vector<double> old_lp, std::vector<double> adv) {
  const std::size_t n = new_lp.size();
  LossCase c{Tensor({n}, std::move(new_lp), true), std::move(old_lp), std::move(adv), std::vector<double>(n, 0.0),
             Tensor({n}, std::vector<double>(n, 0.0), true), Tensor({}, {0.0})};
  return c;
}

PPOLossTerms run_loss(const LossCase& c, double clip = 0.2) {
  return ppo_clip_loss(c.new_lp, c.old_lp, c.adv, c.values, c.targets, c.entropy, clip, 0.5, 0.01);
}

TEST(PpoLoss, EqualPoliciesGiveMinusMeanAdvantage) {
  const LossCase c = loss_case({-0.5, -1.0, -2.0}, {-0.5, -1.0, -2.0}, {1.0, -2.0, 4.0});
  const PPOLossTerms t = run_loss(c);
  EXPECT_NEAR(t.policy.item(), -1.0, 1e-12);
  EXPECT_NEAR(t.total.item(), -1.0, 1e-12);
}

TEST(PpoLoss, UnclippedGradientIsRatioTimesAdvantage) {
  const LossCase c = loss_case({-1.0, -1.0}, {-1.05, -0.95}, {2.0, -3.0});
  run_loss(c).policy.backward();
  const double rho0 = std::exp(0.05), rho1 = std::exp(-0.05);
  EXPECT_NEAR(c.new_lp.grad()[0], -rho0 * 2.0 / 2.0, 1e-12);
  EXPECT_NEAR(c.new_lp.grad()[1], -rho1 * -3.0 / 2.0, 1e-12);
}

TEST(PpoLoss, ClippedRegionHasZeroGradient) {
  // rho = e^0.5 with A > 0 and rho = e^-0.5 with A < 0: both past the clip.
  const LossCase c = loss_case({0.0, 0.0}, {-0.5, 0.5}, {1.0, -1.0});
  const PPOLossTerms t = run_loss(c);
  EXPECT_NEAR(t.policy.item(), -(1.2 * 1.0 + 0.8 * -1.0) / 2.0, 1e-12);
  t.policy.backward();
  EXPECT_EQ(c.new_lp.grad()[0], 0.0);
  EXPECT_EQ(c.new_lp.grad()[1], 0.0);
}

TEST(PpoLoss, PessimisticSideStaysUnclipped) {
  // rho = e^0.5 with A < 0: min picks the unclipped term, gradient survives.
  const LossCase c = loss_case({0.0}, {-0.5}, {-1.0});
  run_loss(c).policy.backward();
  EXPECT_NEAR(c.new_lp.grad()[0], std::exp(0.5), 1e-12);
}

TEST(PpoLoss, ValueAndEntropyTerms) {
  LossCase c = loss_case({0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0});
  c.targets = {1.0, 3.0};
  c.entropy = Tensor({}, {0.7});
  const PPOLossTerms t = run_loss(c);
  EXPECT_NEAR(t.value.item(), 5.0, 1e-12);
  EXPECT_NEAR(t.total.item(), 0.5 * 5.0 - 0.01 * 0.7, 1e-12);
}

TEST(PpoLoss, BadInputsRejected) {
  LossCase c = loss_case({0.0, 0.0}, {0.0}, {0.0, 0.0});
  EXPECT_THROW(run_loss(c), DimensionError);
  c = loss_case({0.0}, {0.0}, {std::nan("")});
  EXPECT_THROW(run_loss(c), NumericError);
}

TEST(PpoLoss, GradientCheckThroughModel) {
  PPOModel model(5, kShape, 3, 11);
  Rng rng(12);
  const Tensor obs = random_tensor({4, kShape.size()}, rng, false);
  const std::vector<std::size_t> rows{0, 1, 2, 3}, acts{0, 2, 1, 2};
  const std::vector<double> old{-1.0, -1.2, -0.9, -1.1}, adv{0.5, -1.0, 2.0, -0.3}, tgt{0.2, -0.4, 1.0, 0.0};
  auto loss = [&] {
    const PPOOutput out = model.forward(obs);
    return ppo_clip_loss(pick(log_softmax(out.logits), rows, acts), old, adv, out.value, tgt,
                         categorical_entropy(out.logits), 0.2, 0.5, 0.01)
        .total;
  };
  const auto r = gradient_check(loss, model.params().tensors(), rng, 1e-5, 30);
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(Entropy, UniformAndPeakedLogits) {
  EXPECT_NEAR(categorical_entropy(Tensor({2, 4}, std::vector<double>(8, 0.3))).item(), std::log(4.0), 1e-12);
  EXPECT_NEAR(categorical_entropy(Tensor({1, 3}, {100.0, 0.0, 0.0})).item(), 0.0, 1e-40 + 1e-12);
  Rng rng(13);
  const Tensor logits = random_tensor({3, 5}, rng);
  const double h = categorical_entropy(logits).item();
  EXPECT_GE(h, 0.0);
  EXPECT_LE(h, std::log(5.0));
  EXPECT_THROW(categorical_entropy(Tensor({3})), DimensionError);
}

TEST(Advantages, NormalizedMomentsAndConstantInput) {
  Rng rng(14);
  const auto raw = test::uniform_values(100, rng, -3.0, 7.0);
  const auto a = normalize_advantages(raw);
  const double m = std::accumulate(a.begin(), a.end(), 0.0) / 100.0;
  double v = 0.0;
  for (double x : a) v += (x - m) * (x - m);
  EXPECT_NEAR(m, 0.0, 1e-12);
  EXPECT_NEAR(v / 100.0, 1.0, 1e-12);
  for (double x : normalize_advantages(std::vector<double>(5, 2.5))) EXPECT_EQ(x, 0.0);
  EXPECT_TRUE(normalize_advantages({}).empty());
}

TEST(PpoModel, ShapesAndStoreReuse) {
  PPOModel model(8, kShape, 3, 15);
  Rng rng(16);
  const Tensor obs = random_tensor({5, kShape.size()}, rng, false);
  const PPOOutput out = model.forward(obs);
  EXPECT_EQ(out.logits.shape(), (Shape{5, 3}));
  EXPECT_EQ(out.value.shape(), (Shape{5}));
  PPOModel copy(8, kShape, 3, model.params().clone(false));
  EXPECT_TRUE(bit_identical(copy.forward(obs).logits.data(), out.logits.data()));
  EXPECT_THROW(PPOModel(8, kShape, 3, ParameterStore(true)), DimensionError);
  EXPECT_THROW(model.forward(Tensor({2, 5})), DimensionError);
}

TEST(PpoModel, GreedyPolicyTakesArgmax) {
  PPOModel model(4, kShape, 3, 17);
  Tensor handle = model.params().get("ppo.policy.bias");
  auto bias = handle.data_mut();
  bias[0] = -10.0;
  bias[1] = 10.0;
  bias[2] = 0.0;
  PPOPolicy policy(model, true);
  Rng rng(18);
  Observation obs{kShape, std::vector<double>(kShape.size(), 0.0)};
  for (int i = 0; i < 20; ++i) EXPECT_EQ(policy.act(obs, rng), 1u);
}

TEST(PpoConfig, Validation) {
  PPOConfig c;
  EXPECT_NO_THROW(c.validate());
  c.horizon = 2;
  EXPECT_THROW(c.validate(), ConfigError);
  c = PPOConfig{};
  c.clip = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = PPOConfig{};
  c.lambda = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(PpoTrain, DeterministicAndCountsSteps) {
  auto run = [](std::uint64_t seed) {
    EnvSettings env;
    PPOConfig c;
    c.hidden = 8;
    c.total_steps = 256;
    c.n_envs = 2;
    c.horizon = 64;
    c.minibatch = 32;
    c.epochs = 2;
    c.seed = seed;
    GridBasic probe;
    PPOModel model(c.hidden, probe.observation_shape(), 3, seed);
    const PPOTrainResult r = train_ppo(model, env, c);
    EXPECT_EQ(r.steps, 256u);
    EXPECT_EQ(r.entropies.size(), 4u);
    for (double h : r.entropies) {
      EXPECT_GT(h, 0.0);
      EXPECT_LE(h, std::log(3.0) + 1e-12);
    }
    return std::vector<double>(model.params().get("ppo.w1").data().begin(), model.params().get("ppo.w1").data().end());
  };
  EXPECT_TRUE(bit_identical(run(3), run(3)));
  EXPECT_FALSE(bit_identical(run(3), run(4)));
}

}  // namespace
}  // namespace seqrl
