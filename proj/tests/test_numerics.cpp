#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "mswap/gradcheck.hpp"
#include "mswap/ops.hpp"
#include "cases.hpp"
#include "test_util.hpp"

using namespace mswap;
using mswap::testing::probe_sum;
using mswap::testing::random_tensor;
using mswap::testing::max_abs_diff;
using mswap::testing::naive_conv;
using mswap::testing::naive_matmul;

namespace {

}  // namespace

TEST(Tensor, RejectsMismatchedBuffer) {
  EXPECT_THROW(Tensor<double>(Shape{2, 3}, std::vector<double>(5)), ShapeError);
  EXPECT_THROW(Tensor<double>(Shape{0, 3}), ShapeError);
  Tensor<double> t(Shape{2, 3}, 1.5);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_THROW(t.item(), ContractError);
}

TEST(Matmul, IdentityAndScalar) {
  Graph<double> g;
  auto id = g.constant(Tensor<double>(Shape{2, 2}, {1, 0, 0, 1}));
  auto b = g.constant(Tensor<double>(Shape{2, 2}, {3, 4, 5, 6}));
  EXPECT_EQ(matmul(id, b).value().storage(), (std::vector<double>{3, 4, 5, 6}));
  auto two = g.constant(Tensor<double>(Shape{1, 1}, {2}));
  auto three = g.constant(Tensor<double>(Shape{1, 1}, {3}));
  EXPECT_EQ(matmul(two, three).value().item(), 6.0);
}

TEST(Matmul, MatchesTripleLoop) {
  Graph<double> g;
  auto a = random_tensor(Shape{3, 4}, 1);
  auto b = random_tensor(Shape{4, 2}, 2);
  auto c = matmul(g.constant(a), g.constant(b));
  EXPECT_LE(max_abs_diff(c.value(), naive_matmul(a, b)), 1e-12);
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  Graph<double> g;
  auto a = g.constant(Tensor<double>(Shape{2, 3}));
  auto b = g.constant(Tensor<double>(Shape{2, 3}));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[2,3] by [2,3]"), std::string::npos) << e.what();
  }
}

TEST(Conv2d, OnesWithUnitKernel) {
  Graph<double> g;
  auto x = g.constant(Tensor<double>(Shape{1, 3, 3}, 1.0));
  auto k = g.constant(Tensor<double>(Shape{1, 1, 1, 1}, 1.0));
  auto y = conv2d(x, k, 1, 0);
  EXPECT_EQ(y.shape(), (Shape{1, 3, 3}));
  for (double v : y.value().data()) EXPECT_EQ(v, 1.0);
}

TEST(Conv2d, DeltaKernelReproducesInput) {
  Graph<double> g;
  auto xin = random_tensor(Shape{1, 5, 4}, 3);
  Tensor<double> k(Shape{1, 1, 3, 3}, 0.0);
  k[4] = 1.0;
  auto y = conv2d(g.constant(xin), g.constant(k), 1, 1);
  EXPECT_EQ(y.value(), xin);
}

TEST(Conv2d, MatchesNaiveOracle) {
  Graph<double> g;
  auto x = random_tensor(Shape{2, 5, 5}, 4);
  auto k = random_tensor(Shape{3, 2, 3, 3}, 5);
  auto y = conv2d(g.constant(x), g.constant(k), 1, 0);
  EXPECT_EQ(y.shape(), (Shape{3, 3, 3}));
  EXPECT_LE(max_abs_diff(y.value(), naive_conv(x, k, 1, 0)), 1e-12);
  auto y2 = conv2d(g.constant(x), g.constant(k), 2, 1);
  EXPECT_LE(max_abs_diff(y2.value(), naive_conv(x, k, 2, 1)), 1e-12);
}

TEST(Conv2d, ShapeErrors) {
  Graph<double> g;
  auto x = g.constant(Tensor<double>(Shape{2, 3, 3}));
  EXPECT_THROW(conv2d(x, g.constant(Tensor<double>(Shape{1, 2, 5, 5})), 1, 0), ShapeError);
  EXPECT_THROW(conv2d(x, g.constant(Tensor<double>(Shape{1, 3, 3, 3})), 1, 0), ShapeError);
  EXPECT_THROW(conv2d(x, g.constant(Tensor<double>(Shape{1, 2, 3, 3})), 0, 0), ShapeError);
}

TEST(Softmax, SymmetricAndStable) {
  Graph<double> g;
  auto y = softmax_rows(g.constant(Tensor<double>(Shape{1, 3}, 0.0)));
  for (double v : y.value().data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  auto big = softmax_rows(g.constant(Tensor<double>(Shape{1, 2}, 1000.0)));
  EXPECT_EQ(big.value()[0], 0.5);
  EXPECT_EQ(big.value()[1], 0.5);
}

TEST(Softmax, MatchesExtendedPrecisionOracle) {
  Graph<double> g;
  auto x = random_tensor(Shape{4, 5}, 6, -3, 3);
  auto y = softmax_rows(g.constant(x)).value();
  for (std::size_t i = 0; i < 4; ++i) {
    long double s = 0;
    for (std::size_t j = 0; j < 5; ++j) s += std::exp(static_cast<long double>(x[i * 5 + j]));
    double row = 0;
    for (std::size_t j = 0; j < 5; ++j) {
      EXPECT_NEAR(y[i * 5 + j], static_cast<double>(std::exp(static_cast<long double>(x[i * 5 + j])) / s), 1e-12);
      row += y[i * 5 + j];
    }
    EXPECT_NEAR(row, 1.0, 1e-12);
  }
}

TEST(Softmax, ShiftInvariantProperty) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Graph<double> g;
    auto x = random_tensor(Shape{3, 6}, 100 + seed, -5, 5);
    auto shifted = x;
    CounterRng rng(seed);
    for (std::size_t i = 0; i < 3; ++i) {
      const double c = rng.uniform(-50, 50);
      for (std::size_t j = 0; j < 6; ++j) shifted[i * 6 + j] += c;
    }
    auto a = softmax_rows(g.constant(x)).value();
    auto b = softmax_rows(g.constant(shifted)).value();
    EXPECT_LE(max_abs_diff(a, b), 1e-9);
  }
}

TEST(Elementwise, LeakyReluCosineL1) {
  Graph<double> g;
  auto y = leaky_relu(g.constant(Tensor<double>(Shape{2}, {-2, 3})), 0.2);
  EXPECT_DOUBLE_EQ(y.value()[0], -0.4);
  EXPECT_DOUBLE_EQ(y.value()[1], 3.0);
  auto v = g.constant(random_tensor(Shape{7}, 9));
  EXPECT_NEAR(cosine_similarity(v, v).value().item(), 1.0, 1e-15);
  EXPECT_EQ(l1_norm(v, v).value().item(), 0.0);
  auto zero = g.constant(Tensor<double>(Shape{7}, 0.0));
  EXPECT_THROW(cosine_similarity(v, zero), DegenerateInputError);
  EXPECT_THROW(l2_normalize(zero), DegenerateInputError);
}

TEST(Elementwise, NoImplicitBroadcast) {
  Graph<double> g;
  auto a = g.constant(Tensor<double>(Shape{2, 3}));
  auto b = g.constant(Tensor<double>(Shape{3}));
  EXPECT_THROW(add(a, b), ShapeError);
  auto s = g.constant(Tensor<double>::scalar(2.0));
  EXPECT_EQ(mul(a, s).shape(), (Shape{2, 3}));
  EXPECT_EQ(mul(s, a).shape(), (Shape{2, 3}));
}

TEST(InstanceNorm, ZeroMeanUnitVariancePerChannel) {
  Graph<double> g;
  auto y = instance_norm(g.constant(random_tensor(Shape{3, 4, 4}, 11, -2, 5)), 0.0).value();
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < 16; ++i) m += y[c * 16 + i];
    m /= 16;
    for (std::size_t i = 0; i < 16; ++i) v += (y[c * 16 + i] - m) * (y[c * 16 + i] - m);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 16, 1.0, 1e-12);
  }
}

TEST(Backward, SumAndSquare) {
  Graph<double> g;
  auto xt = random_tensor(Shape{2, 3}, 12);
  auto x = g.variable(xt);
  g.backward(reduce_sum(x));
  for (double v : g.grad(x).data()) EXPECT_EQ(v, 1.0);

  Graph<double> g2;
  auto x2 = g2.variable(xt);
  g2.backward(reduce_sum(mul(x2, x2)));
  for (std::size_t i = 0; i < xt.numel(); ++i) EXPECT_DOUBLE_EQ(g2.grad(x2)[i], 2 * xt[i]);
}

TEST(Backward, NonScalarRootIsContractError) {
  Graph<double> g;
  auto x = g.variable(Tensor<double>(Shape{2}));
  EXPECT_THROW(g.backward(x), ContractError);
}

TEST(Backward, RepeatedCallsAccumulate) {
  ParameterStore<double> ps;
  auto& p = ps.add("w", random_tensor(Shape{4}, 13));
  Graph<double> g;
  auto loss = reduce_sum(mul(g.param(p), g.param(p)));
  g.backward(loss);
  const auto once = p.grad;
  g.backward(loss);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(p.grad[i], 2 * once[i]);
}

TEST(Backward, DeterministicBitForBit) {
  ParameterStore<double> ps;
  auto& k = ps.add("k", random_tensor(Shape{3, 2, 3, 3}, 14));
  auto x = random_tensor(Shape{2, 6, 6}, 15);
  auto run = [&] {
    ps.zero_grad();
    Graph<double> g;
    auto y = instance_norm(conv2d(g.constant(x), g.param(k), 1, 1), 1e-5);
    auto s = softmax_rows(reshape(y, Shape{3, 36}));
    g.backward(probe_sum(s, 1));
    return k.grad;
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(std::memcmp(a.ptr(), b.ptr(), a.numel() * sizeof(double)), 0);
}

TEST(Backward, FrozenParameterReceivesNoGradient) {
  ParameterStore<double> ps;
  auto& p = ps.add("w", random_tensor(Shape{3}, 16));
  p.requires_grad = false;
  Graph<double> g;
  auto x = g.variable(random_tensor(Shape{3}, 17));
  g.backward(reduce_sum(mul(g.param(p), x)));
  for (double v : p.grad.data()) EXPECT_EQ(v, 0.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(g.grad(x)[i], p.value[i]);
}

TEST(GradCheck, SumIsExact) {
  const double err = grad_check([](Graph<double>&, Var<double> x) { return reduce_sum(x); },
                                random_tensor(Shape{3, 4}, 18));
  EXPECT_LT(err, 1e-10);
}

// Every differentiable op, 20 seeded random instances each.
class OpGradients : public ::testing::TestWithParam<int> {};

TEST_P(OpGradients, PassCentralDifferences) {
  const std::uint64_t s = 1000 + static_cast<std::uint64_t>(GetParam());
  for (const auto& c : mswap::testing::op_gradient_cases(s)) EXPECT_LT(grad_check(c.f, c.x, 1e-5), 1e-4) << c.name << " seed " << s;
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradients, ::testing::Range(0, 20));

class OracleSweep : public ::testing::TestWithParam<int> {};

TEST_P(OracleSweep, FastKernelsMatchNaiveLoops) {
  const auto seed = static_cast<std::uint64_t>(GetParam());
  for (const auto& c : mswap::testing::oracle_cases(seed)) EXPECT_LT(c.error, 1e-10) << c.name << " seed " << seed;
}

INSTANTIATE_TEST_SUITE_P(Seeds, OracleSweep, ::testing::Range(0, 10));

TEST(Rng, CounterStreamIsReproducibleAndResumable) {
  CounterRng a(42);
  for (int i = 0; i < 10; ++i) a.next_u64();
  CounterRng b(42, a.counter());
  EXPECT_EQ(a.next_u64(), b.next_u64());
  CounterRng c(42);
  double mean = 0;
  for (int i = 0; i < 20000; ++i) mean += c.uniform();
  EXPECT_NEAR(mean / 20000, 0.5, 0.01);
  EXPECT_LT(CounterRng(1).below(7), 7u);
}
