#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mswap/schedules.hpp"
#include "test_util.hpp"

using namespace mswap;

namespace {

ScheduleState state(std::uint64_t total, double gamma = 1.0) {
  ScheduleState s;
  s.total_steps = total;
  s.t_cycle = total;
  s.gamma = gamma;
  return s;
}

}  // namespace

TEST(Schedule, WeightEndpointsAndMidpoint) {
  const auto s = state(2000);
  EXPECT_NEAR(lambda_id_at(s.at(0)), 40.0, 1e-12);
  EXPECT_NEAR(lambda_id_at(s.at(2000)), 0.0, 1e-12);
  EXPECT_NEAR(lambda_id_at(s.at(1000)), 20.0, 1e-12);
  EXPECT_NEAR(lambda_rec_at(s.at(0)), 2.0, 1e-12);
  EXPECT_NEAR(lambda_rec_at(s.at(1000)), 1.0, 1e-12);
  EXPECT_NEAR(lambda_rec_at(s.at(2000)), 0.0, 1e-12);
  EXPECT_THROW(lambda_id_at(s.at(2001)), ContractError);
}

TEST(Schedule, WeightsFollowPowerLaw) {
  for (double gamma : {0.5, 1.0, 2.0, 3.3}) {
    const auto s = state(500, gamma);
    double prev = lambda_id_at(s.at(0));
    for (std::uint64_t t = 1; t <= 500; ++t) {
      const double v = lambda_id_at(s.at(t));
      EXPECT_LE(v, prev);
      EXPECT_GE(v, 0.0);
      EXPECT_NEAR(v, 40.0 * std::pow(1.0 - t / 500.0, gamma), 1e-12);
      prev = v;
    }
  }
}

TEST(Schedule, StaticWeightsStayAtMaximum) {
  auto s = state(100);
  s.dynamic_weights = false;
  EXPECT_EQ(lambda_id_at(s.at(73)), 40.0);
  EXPECT_EQ(lambda_rec_at(s.at(100)), 2.0);
}

TEST(Schedule, CosineEndpointsAndMidpoint) {
  const auto s = state(2000);
  EXPECT_NEAR(lr_at(s.at(0)), 2e-4, 1e-12);
  EXPECT_NEAR(lr_at(s.at(2000)), 2e-6, 1e-12);
  EXPECT_NEAR(lr_at(s.at(1000)), (2e-4 + 2e-6) / 2, 1e-12);
}

TEST(Schedule, CosineSymmetry) {
  for (std::uint64_t tc : {1u, 7u, 100u, 2000u}) {
    const auto s = state(tc);
    for (std::uint64_t t = 0; t <= tc; ++t)
      EXPECT_NEAR(lr_at(s.at(t)) + lr_at(s.at(tc - t)), s.eta_min + s.eta_max, 1e-12);
  }
}

TEST(Schedule, CosineRestartsEachCycle) {
  auto s = state(300);
  s.t_cycle = 100;
  for (std::uint64_t t = 1; t <= 100; ++t) {
    EXPECT_EQ(cosine_lr(s.at(t + 100)), cosine_lr(s.at(t)));
    EXPECT_EQ(cosine_lr(s.at(t + 200)), cosine_lr(s.at(t)));
  }
  EXPECT_NEAR(cosine_lr(s.at(200)), s.eta_min, 1e-18);
  for (std::uint64_t t = 0; t <= 300; ++t) {
    EXPECT_GE(cosine_lr(s.at(t)), s.eta_min);
    EXPECT_LE(cosine_lr(s.at(t)), s.eta_max);
  }
}

TEST(Schedule, ConstantAndStepPolicies) {
  auto s = state(400);
  s.lr_policy = LrPolicy::Constant;
  EXPECT_EQ(lr_at(s.at(399)), 2e-4);
  s.lr_policy = LrPolicy::StepDecay;
  EXPECT_EQ(lr_at(s.at(199)), 2e-4);
  EXPECT_NEAR(lr_at(s.at(200)), 2e-5, 1e-18);
  EXPECT_NEAR(lr_at(s.at(299)), 2e-5, 1e-18);
  EXPECT_NEAR(lr_at(s.at(300)), 2e-6, 1e-18);
  EXPECT_EQ(lr_policy_from_string("step"), LrPolicy::StepDecay);
  EXPECT_EQ(to_string(LrPolicy::Cosine), "cosine");
  EXPECT_THROW(lr_policy_from_string("linear"), ContractError);
}

TEST(Schedule, InvalidStatesRejected) {
  auto s = state(10);
  s.gamma = 0;
  EXPECT_THROW(lambda_id_at(s), ContractError);
  s = state(10);
  s.eta_min = 1.0;
  EXPECT_THROW(lr_at(s), ContractError);
  s = state(10);
  s.t_cycle = 0;
  EXPECT_THROW(lr_at(s), ContractError);
}

// ---- Adam -----------------------------------------------------------------

namespace {

struct Quadratic {
  std::vector<double> a{1.0, 3.0, 0.25, 10.0};
  std::vector<double> c{0.5, -1.0, 2.0, 0.1};
  std::vector<double> grad(const std::vector<double>& w) const {
    std::vector<double> g(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) g[i] = a[i] * (w[i] - c[i]);
    return g;
  }
};

// Written straight from the update rule, one scalar at a time.
std::vector<double> adam_oracle(std::vector<double> w, const Quadratic& q, int steps, double lr) {
  const double b1 = 0.5, b2 = 0.999, eps = 1e-8;
  std::vector<double> m(w.size(), 0.0), v(w.size(), 0.0);
  for (int t = 1; t <= steps; ++t) {
    const auto g = q.grad(w);
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(b1, t));
      const double vh = v[i] / (1 - std::pow(b2, t));
      w[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
  return w;
}

}  // namespace

TEST(Adam, TenStepsMatchOracle) {
  const Quadratic q;
  const std::vector<double> w0{0.0, 0.3, -1.0, 1.0};
  ParameterStore<double> store;
  auto& p = store.add("w", Tensor<double>(Shape{4}, w0));
  AdamState<double> st;
  for (int t = 0; t < 10; ++t) {
    const auto g = q.grad(p.value.storage());
    p.grad = Tensor<double>(Shape{4}, g);
    adam_step(store, st, 0.05);
  }
  const auto expect = adam_oracle(w0, q, 10, 0.05);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(p.value[i], expect[i], 1e-12);
  EXPECT_EQ(st.step, 10u);
  EXPECT_EQ(st.m[0].shape(), p.value.shape());
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  ParameterStore<float> store;
  auto& p = store.add("w", mswap::testing::random_tensor<float>({3, 3}, 1));
  const auto before = p.value;
  AdamState<float> st;
  for (int i = 0; i < 3; ++i) adam_step(store, st, 1e-3);
  EXPECT_EQ(p.value, before);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterStore<double> store;
  auto& p = store.add("w", Tensor<double>(Shape{3}, {1.0, 1.0, 1.0}));
  p.grad = Tensor<double>(Shape{3}, {0.5, -2.0, 30.0});
  AdamState<double> st;
  adam_step(store, st, 0.01);
  EXPECT_NEAR(p.value[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(p.value[1], 1.0 + 0.01, 1e-9);
  EXPECT_NEAR(p.value[2], 1.0 - 0.01, 1e-9);
}

TEST(Adam, InsensitiveToGradientScale) {
  auto run = [](double k) {
    ParameterStore<double> store;
    auto& p = store.add("w", Tensor<double>(Shape{2}, {0.0, 0.0}));
    p.grad = Tensor<double>(Shape{2}, {0.3 * k, -0.7 * k});
    AdamState<double> st;
    adam_step(store, st, 1e-3);
    return p.value;
  };
  const auto a = run(1.0), b = run(1000.0);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_LT(std::abs(a[i] - b[i]) / std::abs(a[i]), 0.01);
}

TEST(Adam, NanGradientNamesParameterAndChangesNothing) {
  ParameterStore<double> store;
  auto& a = store.add("first", Tensor<double>(Shape{2}, {1.0, 2.0}));
  auto& b = store.add("second.w", Tensor<double>(Shape{2}, {3.0, 4.0}));
  a.grad = Tensor<double>(Shape{2}, {1.0, 1.0});
  b.grad = Tensor<double>(Shape{2}, {NAN, 0.0});
  AdamState<double> st;
  try {
    adam_step(store, st, 0.1);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("second.w"), std::string::npos);
  }
  EXPECT_EQ(a.value[0], 1.0);
  EXPECT_EQ(st.step, 0u);
}

TEST(Adam, FrozenParametersSkipped) {
  ParameterStore<double> store;
  auto& p = store.add("w", Tensor<double>(Shape{1}, {1.0}));
  p.requires_grad = false;
  p.grad = Tensor<double>(Shape{1}, {5.0});
  AdamState<double> st;
  adam_step(store, st, 0.1);
  EXPECT_EQ(p.value[0], 1.0);
}
