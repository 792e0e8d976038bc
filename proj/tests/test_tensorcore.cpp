#include <gtest/gtest.h>
#include <omp.h>

#include <cmath>
#include <numeric>

#include "seqrl/adam.hpp"
#include "seqrl/error.hpp"
#include "seqrl/kernels.hpp"
#include "seqrl/ops.hpp"
#include "seqrl/params.hpp"
#include "support.hpp"

namespace seqrl {
namespace {

using test::gradient_check;
using test::random_tensor;

constexpr double kGradTol = 1e-4;
constexpr int kInstances = 10;

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// ------------------------------------------------------------ examples

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Tensor eye({2, 2}, {1, 0, 0, 1});
  const Tensor m({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(values(matmul(eye, m)), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Matmul, MatchesHandProduct) {
  const Tensor a({2, 2}, {1, 2, 3, 4});
  const Tensor b({2, 2}, {5, 6, 7, 8});
  EXPECT_EQ(values(matmul(a, b)), (std::vector<double>{19, 22, 43, 50}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  const Tensor a({2, 3}), b({2, 2});
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2x2]"), std::string::npos) << msg;
  }
}

TEST(Matmul, AgreesWithDotProductOracle) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.below(6), k = 1 + rng.below(6), n = 1 + rng.below(6);
    const Tensor a = random_tensor({m, k}, rng, false), b = random_tensor({k, n}, rng, false);
    const Tensor c = matmul(a, b);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += a.at(i * k + p) * b.at(p * n + j);
        EXPECT_NEAR(c.at(i * n + j), s, 1e-12);
      }
    }
  }
}

TEST(Conv2d, UnitKernelScalesInput) {
  const Tensor x({1, 3, 3}, 1.0);
  const Tensor k({1, 1, 1, 1}, 2.0);
  const Tensor y = conv2d(x, k, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 3, 3}));
  for (double v : y.data()) EXPECT_EQ(v, 2.0);
}

TEST(Conv2d, SumsWindow) {
  const Tensor x({1, 2, 2}, {1, 2, 3, 4});
  const Tensor k({1, 1, 2, 2}, 1.0);
  const Tensor y = conv2d(x, k, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1}));
  EXPECT_EQ(y.item(), 10.0);
}

TEST(Conv2d, OutputExtentFollowsFormula) {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t h = 3 + rng.below(6), w = 3 + rng.below(6), kh = 1 + rng.below(3), kw = 1 + rng.below(3);
    const std::size_t stride = 1 + rng.below(2), pad = rng.below(2);
    const Tensor x = random_tensor({2, h, w}, rng, false);
    const Tensor k = random_tensor({3, 2, kh, kw}, rng, false);
    const Tensor y = conv2d(x, k, stride, pad);
    EXPECT_EQ(y.shape(), (Shape{3, (h - kh + 2 * pad) / stride + 1, (w - kw + 2 * pad) / stride + 1}));
  }
}

TEST(Conv2d, KernelLargerThanPaddedInputIsDimensionError) {
  EXPECT_THROW(conv2d(Tensor({1, 2, 2}), Tensor({1, 1, 3, 3}), 1, 0), DimensionError);
  EXPECT_NO_THROW(conv2d(Tensor({1, 2, 2}), Tensor({1, 1, 3, 3}), 1, 1));
}

TEST(Softmax, ConstantRowIsUniform) {
  for (double c : {-5.0, 0.0, 3.5, 900.0}) {
    const Tensor y = softmax(Tensor({3}, {c, c, c}), 0);
    for (double v : y.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  }
}

TEST(Softmax, AnalyticTwoEntries) {
  const Tensor y = softmax(Tensor({2}, {0.0, std::log(2.0)}), 0);
  EXPECT_NEAR(y.at(0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(y.at(1), 2.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeInputsDoNotOverflow) {
  const Tensor y = softmax(Tensor({2}, {1000.0, 0.0}), 0);
  EXPECT_EQ(y.at(0), 1.0);
  EXPECT_GE(y.at(1), 0.0);
  EXPECT_LT(y.at(1), 1e-300);
}

TEST(Softmax, RowsSumToOneForExtremeInputs) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t rows = 1 + rng.below(5), cols = 1 + rng.below(9);
    const Tensor x = random_tensor({rows, cols}, rng, false, -1e4, 1e4);
    const Tensor y = softmax(x, 1);
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        EXPECT_GE(y.at(r * cols + c), 0.0);
        s += y.at(r * cols + c);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Layernorm, ConstantVectorMapsToZero) {
  const Tensor y = layernorm(Tensor({4}, 3.0), Tensor({4}, 1.0), Tensor({4}, 0.0));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Layernorm, UnitVarianceInputIsUnchanged) {
  const Tensor y = layernorm(Tensor({2}, {1.0, -1.0}), Tensor({2}, 1.0), Tensor({2}, 0.0), 1e-12);
  EXPECT_NEAR(y.at(0), 1.0, 1e-9);
  EXPECT_NEAR(y.at(1), -1.0, 1e-9);
}

TEST(Layernorm, ZeroLengthLastDimIsDimensionError) {
  EXPECT_THROW(layernorm(Tensor(Shape{2, 0}), Tensor(Shape{0}), Tensor(Shape{0})), DimensionError);
}

TEST(CrossEntropy, UniformLogitsGiveLogA) {
  const std::vector<std::size_t> targets{2};
  EXPECT_NEAR(cross_entropy(Tensor({1, 4}, 0.0), targets).item(), std::log(4.0), 1e-12);
}

TEST(CrossEntropy, ConfidentTargetIsNearZero) {
  const std::vector<std::size_t> targets{1};
  EXPECT_LT(cross_entropy(Tensor({1, 3}, {0.0, 30.0, 0.0}), targets).item(), 1e-12);
}

TEST(CrossEntropy, HandSoftmax) {
  const std::vector<std::size_t> targets{0};
  EXPECT_NEAR(cross_entropy(Tensor({1, 2}, {0.0, std::log(3.0)}), targets).item(), std::log(4.0), 1e-12);
}

TEST(CrossEntropy, OutOfRangeTargetIsIndexError) {
  const std::vector<std::size_t> targets{3};
  EXPECT_THROW(cross_entropy(Tensor({1, 3}), targets), IndexError);
}

TEST(Mse, EqualInputsGiveZero) {
  const Tensor a({3}, {1, 2, 3});
  EXPECT_EQ(mse(a, a).item(), 0.0);
}

TEST(Mse, HandArithmetic) { EXPECT_EQ(mse(Tensor({2}, {1, 2}), Tensor({2}, {0, 0})).item(), 2.5); }

TEST(Mse, GradientIsTwiceResidualOverN) {
  const Tensor p({3}, {1.0, -2.0, 0.5}, true);
  const Tensor t({3}, {0.0, 1.0, 0.5}, true);
  mse(p, t).backward();
  EXPECT_NEAR(p.grad()[0], 2.0 * 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(p.grad()[1], 2.0 * -3.0 / 3.0, 1e-15);
  EXPECT_EQ(p.grad()[2], 0.0);
  EXPECT_FALSE(t.has_grad());
}

TEST(Mse, ShapeMismatchIsDimensionError) { EXPECT_THROW(mse(Tensor({2}), Tensor({3})), DimensionError); }

// ------------------------------------------------------------ backward

TEST(Backward, SumGivesOnes) {
  const Tensor x({2, 3}, 0.7, true);
  sum(x).backward();
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareGivesTwoX) {
  const Tensor x({1}, {3.0}, true);
  sum(mul(x, x)).backward();
  EXPECT_EQ(x.grad()[0], 6.0);
}

TEST(Backward, SecondCallIsStateError) {
  const Tensor x({2}, 1.0, true);
  const Tensor loss = sum(scale(x, 2.0));
  loss.backward();
  EXPECT_THROW(loss.backward(), StateError);
}

TEST(Backward, NonScalarRootIsDimensionError) {
  const Tensor x({2}, 1.0, true);
  EXPECT_THROW(scale(x, 2.0).backward(), DimensionError);
}

TEST(Backward, CycleIsDetected) {
  const Tensor x({2}, 1.0, true);
  const Tensor a = scale(x, 2.0);
  const Tensor b = scale(a, 3.0);
  a.node().inputs.push_back(b.node_ptr());
  EXPECT_THROW(sum(b).backward(), StateError);
  a.node().inputs.pop_back();
}

TEST(Backward, SharedTensorAccumulatesBothBranches) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_tensor({4}, rng);
    const Tensor w1 = random_tensor({4}, rng, false), w2 = random_tensor({4}, rng, false);
    sum(add(mul(x, w1), mul(x, w2))).backward();
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(x.grad()[i], w1.at(i) + w2.at(i), 1e-15);
  }
}

TEST(Backward, LeafGradientsAccumulateAcrossCalls) {
  Tensor x({1}, {2.0}, true);
  sum(scale(x, 3.0)).backward();
  sum(scale(x, 4.0)).backward();
  EXPECT_EQ(x.grad()[0], 7.0);
  x.zero_grad();
  EXPECT_FALSE(x.has_grad() && x.grad()[0] != 0.0);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  const Tensor x({2}, 1.0, true);
  Tensor y;
  {
    NoGradGuard guard;
    y = sum(scale(x, 2.0));
  }
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(grad_enabled());
}

TEST(CheckedMode, NonFiniteOutputRaises) {
  ASSERT_TRUE(checked());
  EXPECT_THROW(exp(Tensor({1}, {1000.0})), NumericError);
  set_checked(false);
  EXPECT_NO_THROW(exp(Tensor({1}, {1000.0})));
  set_checked(true);
}

TEST(Determinism, IdenticalInputsGiveBitIdenticalOutputs) {
  Rng rng(9);
  const Tensor x = random_tensor({3, 5, 8}, rng, false);
  const Tensor w = random_tensor({8, 8}, rng, false);
  const AttentionMask mask = [] {
    AttentionMask m{5, std::vector<std::uint8_t>(25)};
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j <= i; ++j) m.allowed[i * 5 + j] = 1;
    return m;
  }();
  const Tensor a = attention(linear(x, w), x, x, 2, &mask);
  const Tensor b = attention(linear(x, w), x, x, 2, &mask);
  EXPECT_TRUE(test::bit_identical(a.data(), b.data()));
}

// ------------------------------------------------------------ Adam

TEST(Adam, ZeroGradientLeavesParamsAndCountsStep) {
  std::vector<Tensor> params{Tensor({3}, {1.0, 2.0, 3.0}, true)};
  params[0].grad_mut();
  AdamState state = make_adam_state(params);
  adam_step(params, state);
  EXPECT_EQ(values(params[0]), (std::vector<double>{1.0, 2.0, 3.0}));
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, FirstStepMatchesHandEvaluation) {
  std::vector<Tensor> params{Tensor({1}, {0.0}, true)};
  AdamState state = make_adam_state(params, {1e-3, 0.9, 0.999, 1e-8});
  params[0].grad_mut()[0] = 1.0;
  adam_step(params, state);
  // m_hat = 1, v_hat = 1 -> step = lr * 1 / (1 + eps)
  EXPECT_NEAR(params[0].at(0), -1e-3 / (1.0 + 1e-8), 1e-15);
  EXPECT_NEAR(params[0].at(0), -9.99999e-4, 1e-9);
}

TEST(Adam, RepeatedGradientGivesNearlyEqualSteps) {
  std::vector<Tensor> params{Tensor({1}, {0.0}, true)};
  AdamState state = make_adam_state(params);
  params[0].grad_mut()[0] = 0.3;
  adam_step(params, state);
  const double d1 = params[0].at(0);
  adam_step(params, state);
  const double d2 = params[0].at(0) - d1;
  EXPECT_NEAR(std::abs(d2), std::abs(d1), 0.01 * std::abs(d1));
  EXPECT_EQ(state.step, 2u);
}

TEST(Adam, NonFiniteGradientRaisesInCheckedMode) {
  std::vector<Tensor> params{Tensor({1}, {0.0}, true)};
  AdamState state = make_adam_state(params);
  params[0].grad_mut()[0] = std::nan("");
  EXPECT_THROW(adam_step(params, state), NumericError);
}

TEST(Adam, ClipGradNormRescalesToLimit) {
  std::vector<Tensor> params{Tensor({2}, 0.0, true)};
  params[0].grad_mut()[0] = 3.0;
  params[0].grad_mut()[1] = 4.0;
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 1.0), 5.0);
  EXPECT_NEAR(params[0].grad()[0], 0.6, 1e-12);
  EXPECT_NEAR(params[0].grad()[1], 0.8, 1e-12);
}

// ------------------------------------------------------------ gradient suite

struct OpCase {
  const char* name;
  std::function<std::pair<std::function<Tensor()>, std::vector<Tensor>>(Rng&)> make;
};

std::pair<std::function<Tensor()>, std::vector<Tensor>> probed(std::function<Tensor()> f, std::vector<Tensor> in,
                                                                std::uint64_t seed) {
  const Tensor probe = f();
  auto w = test::probe_weights(probe, seed);
  return {[f, w] { return test::probe_loss(f(), w); }, std::move(in)};
}

std::vector<OpCase> op_cases() {
  std::vector<OpCase> cases;
  auto add_case = [&](const char* name, auto make) { cases.push_back({name, make}); };
  add_case("matmul", [](Rng& r) {
    const std::size_t m = 1 + r.below(4), k = 1 + r.below(4), n = 1 + r.below(4);
    Tensor a = random_tensor({m, k}, r), b = random_tensor({k, n}, r);
    return probed([=] { return matmul(a, b); }, {a, b}, r());
  });
  add_case("linear", [](Rng& r) {
    Tensor x = random_tensor({2, 3, 4}, r), w = random_tensor({4, 3}, r), b = random_tensor({3}, r);
    return probed([=] { return linear(x, w, b); }, {x, w, b}, r());
  });
  add_case("add_broadcast", [](Rng& r) {
    Tensor a = random_tensor({3, 4}, r), b = random_tensor({4}, r);
    return probed([=] { return add(a, b); }, {a, b}, r());
  });
  add_case("sub", [](Rng& r) {
    Tensor a = random_tensor({5}, r), b = random_tensor({5}, r);
    return probed([=] { return sub(a, b); }, {a, b}, r());
  });
  add_case("mul", [](Rng& r) {
    Tensor a = random_tensor({2, 3}, r), b = random_tensor({2, 3}, r);
    return probed([=] { return mul(a, b); }, {a, b}, r());
  });
  add_case("scale", [](Rng& r) {
    Tensor a = random_tensor({4}, r);
    const double f = r.uniform() * 4 - 2;
    return probed([=] { return scale(a, f); }, {a}, r());
  });
  add_case("add_scalar", [](Rng& r) {
    Tensor a = random_tensor({4}, r);
    return probed([=] { return add_scalar(a, 0.3); }, {a}, r());
  });
  add_case("minimum", [](Rng& r) {
    Tensor a = random_tensor({6}, r);
    std::vector<double> bv(6);
    for (std::size_t i = 0; i < 6; ++i) bv[i] = a.at(i) + (r.uniform() < 0.5 ? -0.3 : 0.3);
    Tensor b({6}, bv, true);
    return probed([=] { return minimum(a, b); }, {a, b}, r());
  });
  add_case("clamp", [](Rng& r) {
    std::vector<double> v(6);
    for (double& x : v) x = (r.uniform() < 0.5 ? -1.0 : 1.0) * (r.uniform() < 0.5 ? 0.1 : 0.6) + 0.3 * r.uniform();
    Tensor a({6}, v, true);
    return probed([=] { return clamp(a, -0.5, 0.5); }, {a}, r());
  });
  add_case("relu", [](Rng& r) {
    Tensor a = test::away_from_zero({6}, r);
    return probed([=] { return relu(a); }, {a}, r());
  });
  add_case("gelu", [](Rng& r) {
    Tensor a = random_tensor({6}, r, true, -3, 3);
    return probed([=] { return gelu(a); }, {a}, r());
  });
  add_case("sigmoid", [](Rng& r) {
    Tensor a = random_tensor({6}, r, true, -3, 3);
    return probed([=] { return sigmoid(a); }, {a}, r());
  });
  add_case("tanh", [](Rng& r) {
    Tensor a = random_tensor({6}, r, true, -2, 2);
    return probed([=] { return tanh(a); }, {a}, r());
  });
  add_case("exp", [](Rng& r) {
    Tensor a = random_tensor({6}, r);
    return probed([=] { return exp(a); }, {a}, r());
  });
  add_case("softmax_axis0", [](Rng& r) {
    Tensor a = random_tensor({3, 4}, r, true, -2, 2);
    return probed([=] { return softmax(a, 0); }, {a}, r());
  });
  add_case("softmax_axis1", [](Rng& r) {
    Tensor a = random_tensor({2, 3, 4}, r, true, -2, 2);
    return probed([=] { return softmax(a, 1); }, {a}, r());
  });
  add_case("log_softmax", [](Rng& r) {
    Tensor a = random_tensor({3, 5}, r, true, -2, 2);
    return probed([=] { return log_softmax(a); }, {a}, r());
  });
  add_case("layernorm", [](Rng& r) {
    Tensor x = random_tensor({3, 5}, r, true, -2, 2), g = random_tensor({5}, r), b = random_tensor({5}, r);
    return probed([=] { return layernorm(x, g, b); }, {x, g, b}, r());
  });
  add_case("conv2d", [](Rng& r) {
    const std::size_t stride = 1 + r.below(2), pad = r.below(2);
    Tensor x = random_tensor({2, 2, 5, 4}, r), k = random_tensor({3, 2, 3, 2}, r), b = random_tensor({3}, r);
    return probed([=] { return conv2d(x, k, stride, pad, b); }, {x, k, b}, r());
  });
  add_case("attention", [](Rng& r) {
    const std::size_t t = 1 + r.below(4);
    Tensor q = random_tensor({2, t, 4}, r), k = random_tensor({2, t, 4}, r), v = random_tensor({2, t, 4}, r);
    auto mask = std::make_shared<AttentionMask>();
    mask->size = t;
    mask->allowed.assign(t * t, 0);
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j <= i; ++j) mask->allowed[i * t + j] = 1;
    return probed([=] { return attention(q, k, v, 2, mask.get()); }, {q, k, v}, r());
  });
  add_case("reshape", [](Rng& r) {
    Tensor a = random_tensor({2, 6}, r);
    return probed([=] { return reshape(a, {3, 4}); }, {a}, r());
  });
  add_case("select", [](Rng& r) {
    Tensor a = random_tensor({3, 4, 2}, r);
    const std::size_t i = r.below(4);
    return probed([=] { return select(a, 1, i); }, {a}, r());
  });
  add_case("slice", [](Rng& r) {
    Tensor a = random_tensor({3, 5}, r);
    return probed([=] { return slice(a, 1, 1, 4); }, {a}, r());
  });
  add_case("stack", [](Rng& r) {
    Tensor a = random_tensor({2, 3}, r), b = random_tensor({2, 3}, r);
    const std::size_t axis = r.below(3);
    return probed([=] { return stack({a, b, a}, axis); }, {a, b}, r());
  });
  add_case("take_rows", [](Rng& r) {
    Tensor table = random_tensor({4, 3}, r);
    std::vector<std::size_t> rows{r.below(4), r.below(4), r.below(4), r.below(4), r.below(4)};
    return probed([=] { return take_rows(table, rows); }, {table}, r());
  });
  add_case("pick", [](Rng& r) {
    Tensor x = random_tensor({4, 3}, r);
    std::vector<std::size_t> rows{0, 1, 2, 3, 1}, cols{r.below(3), r.below(3), r.below(3), r.below(3), r.below(3)};
    return probed([=] { return pick(x, rows, cols); }, {x}, r());
  });
  add_case("sum", [](Rng& r) {
    Tensor a = random_tensor({3, 2}, r);
    return std::pair<std::function<Tensor()>, std::vector<Tensor>>{[=] { return sum(mul(a, a)); }, {a}};
  });
  add_case("mean", [](Rng& r) {
    Tensor a = random_tensor({3, 2}, r);
    return std::pair<std::function<Tensor()>, std::vector<Tensor>>{[=] { return mean(mul(a, a)); }, {a}};
  });
  add_case("mse", [](Rng& r) {
    Tensor p = random_tensor({2, 3}, r), t = random_tensor({2, 3}, r, false);
    return std::pair<std::function<Tensor()>, std::vector<Tensor>>{[=] { return mse(p, t); }, {p}};
  });
  add_case("cross_entropy", [](Rng& r) {
    Tensor l = random_tensor({4, 3}, r, true, -2, 2);
    std::vector<std::size_t> targets{r.below(3), r.below(3), r.below(3), r.below(3)};
    return std::pair<std::function<Tensor()>, std::vector<Tensor>>{[=] { return cross_entropy(l, targets); }, {l}};
  });
  return cases;
}

class OpGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
  const auto cases = op_cases();
  const OpCase& c = cases[GetParam()];
  Rng rng(1000 + GetParam());
  for (int i = 0; i < kInstances; ++i) {
    auto [loss, inputs] = c.make(rng);
    const auto r = gradient_check(loss, inputs, rng);
    EXPECT_LT(r.max_relative_error, kGradTol) << c.name << " instance " << i;
    EXPECT_GT(r.checked, 0u);
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::Range<std::size_t>(0, op_cases().size()),
                         [](const auto& info) { return std::string(op_cases()[info.param].name); });

// ------------------------------------------------------------ kernels

class ParallelKernels : public ::testing::TestWithParam<int> {
 protected:
  void SetUp() override {
    previous_ = omp_get_max_threads();
    omp_set_num_threads(GetParam());
  }
  void TearDown() override { omp_set_num_threads(previous_); }

 private:
  int previous_ = 1;
};

TEST_P(ParallelKernels, GemmVariantsMatchSerialBitForBit) {
  Rng rng(21);
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t m = 1 + rng.below(80), k = 1 + rng.below(80), n = 1 + rng.below(80);
    const auto a = test::uniform_values(m * k, rng), b = test::uniform_values(k * n, rng);
    const auto bt = test::uniform_values(n * k, rng), at = test::uniform_values(k * m, rng);
    const bool acc = trial % 2 == 1;
    auto c0 = test::uniform_values(m * n, rng);
    for (int variant = 0; variant < 3; ++variant) {
      auto s = c0, p = c0;
      if (variant == 0) {
        kernels::serial::gemm(a.data(), b.data(), s.data(), m, k, n, acc);
        kernels::parallel::gemm(a.data(), b.data(), p.data(), m, k, n, acc);
      } else if (variant == 1) {
        kernels::serial::gemm_nt(a.data(), bt.data(), s.data(), m, k, n, acc);
        kernels::parallel::gemm_nt(a.data(), bt.data(), p.data(), m, k, n, acc);
      } else {
        kernels::serial::gemm_tn(at.data(), b.data(), s.data(), m, k, n, acc);
        kernels::parallel::gemm_tn(at.data(), b.data(), p.data(), m, k, n, acc);
      }
      EXPECT_TRUE(test::bit_identical(s, p)) << "variant " << variant;
    }
  }
}

TEST_P(ParallelKernels, ConvMatchesSerialBitForBit) {
  Rng rng(22);
  for (int trial = 0; trial < 8; ++trial) {
    kernels::ConvGeometry g{1 + rng.below(24), 1 + rng.below(5), 4 + rng.below(7), 4 + rng.below(7),
                            1 + rng.below(16), 1 + rng.below(3), 1 + rng.below(3), 1 + rng.below(2), rng.below(2)};
    const auto in = test::uniform_values(g.batch * g.channels * g.height * g.width, rng);
    const auto w = test::uniform_values(g.filters * g.channels * g.kernel_h * g.kernel_w, rng);
    const std::size_t out_n = g.batch * g.filters * g.out_h() * g.out_w();
    const auto go = test::uniform_values(out_n, rng);
    std::vector<double> s(out_n), p(out_n);
    kernels::serial::conv2d_forward(g, in.data(), w.data(), s.data());
    kernels::parallel::conv2d_forward(g, in.data(), w.data(), p.data());
    EXPECT_TRUE(test::bit_identical(s, p));
    std::vector<double> gs(in.size()), gp(in.size());
    kernels::serial::conv2d_backward_input(g, go.data(), w.data(), gs.data());
    kernels::parallel::conv2d_backward_input(g, go.data(), w.data(), gp.data());
    EXPECT_TRUE(test::bit_identical(gs, gp));
    std::vector<double> ks(w.size()), kp(w.size());
    kernels::serial::conv2d_backward_kernels(g, in.data(), go.data(), ks.data());
    kernels::parallel::conv2d_backward_kernels(g, in.data(), go.data(), kp.data());
    EXPECT_TRUE(test::bit_identical(ks, kp));
  }
}

TEST_P(ParallelKernels, AttentionMatchesSerialBitForBit) {
  Rng rng(23);
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t heads = 1 + rng.below(4);
    kernels::AttentionGeometry g{1 + rng.below(6), 1 + rng.below(20), heads * (1 + rng.below(6)), heads};
    const std::size_t n = g.batch * g.length * g.width;
    const auto q = test::uniform_values(n, rng), k = test::uniform_values(n, rng), v = test::uniform_values(n, rng);
    const auto go = test::uniform_values(n, rng);
    std::vector<std::uint8_t> mask(g.length * g.length);
    for (std::size_t i = 0; i < g.length; ++i)
      for (std::size_t j = 0; j <= i; ++j) mask[i * g.length + j] = 1;
    const std::uint8_t* m = trial % 2 ? mask.data() : nullptr;
    const std::size_t pn = g.batch * g.heads * g.length * g.length;
    std::vector<double> os(n), op(n), ps(pn), pp(pn);
    kernels::serial::attention_forward(g, q.data(), k.data(), v.data(), m, os.data(), ps.data());
    kernels::parallel::attention_forward(g, q.data(), k.data(), v.data(), m, op.data(), pp.data());
    EXPECT_TRUE(test::bit_identical(os, op));
    EXPECT_TRUE(test::bit_identical(ps, pp));
    std::vector<double> qs(n), ks(n), vs(n), qp(n), kp(n), vp(n);
    kernels::serial::attention_backward(g, q.data(), k.data(), v.data(), ps.data(), go.data(), qs.data(), ks.data(),
                                        vs.data());
    kernels::parallel::attention_backward(g, q.data(), k.data(), v.data(), pp.data(), go.data(), qp.data(), kp.data(),
                                          vp.data());
    EXPECT_TRUE(test::bit_identical(qs, qp));
    EXPECT_TRUE(test::bit_identical(ks, kp));
    EXPECT_TRUE(test::bit_identical(vs, vp));
  }
}

INSTANTIATE_TEST_SUITE_P(Threads, ParallelKernels, ::testing::Values(1, 2, 4));

// ------------------------------------------------------------ parameters

TEST(ParameterStore, DeclareReturnsExistingEntry) {
  ParameterStore store;
  Rng rng(1);
  const Tensor a = store.declare("w", {2, 2}, init::xavier_uniform(), rng);
  const Tensor b = store.declare("w", {2, 2}, init::zeros(), rng);
  EXPECT_EQ(a.id(), b.id());
  EXPECT_THROW(store.declare("w", {3}, init::zeros(), rng), DimensionError);
}

TEST(ParameterStore, CloneIsDeepAndCopyValuesSyncs) {
  ParameterStore store;
  Rng rng(2);
  store.declare("w", {3}, init::uniform(1.0), rng);
  ParameterStore copy = store.clone(false);
  Tensor w = store.get("w");
  w.data_mut()[0] += 1.0;
  EXPECT_NE(store.get("w").at(0), copy.get("w").at(0));
  copy.copy_values_from(store);
  EXPECT_EQ(values(store.get("w")), values(copy.get("w")));
  EXPECT_FALSE(copy.get("w").requires_grad());
}

}  // namespace
}  // namespace seqrl
