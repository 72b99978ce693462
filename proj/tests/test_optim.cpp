#include <gtest/gtest.h>

#include <cmath>

#include "pctrans/optim.hpp"

using namespace pctrans;
using namespace pctrans::numerics;

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamStore p;
  p.add("w", Tensor::matrix(1, 1, 0.0f));
  p.grad("w")[0] = 1.0f;
  auto state = AdamState::for_params(p);
  adam_step(p, state, 0.001f);
  EXPECT_NEAR(p.value("w")[0], -0.001, 1e-8);
  EXPECT_EQ(state.step, 1);
}

TEST(Adam, ZeroGradientsAreIdentity) {
  ParamStore p;
  p.add("w", Tensor({2, 2}, {1, 2, 3, 4}));
  const Tensor before = p.value("w");
  auto state = AdamState::for_params(p);
  adam_step(p, state, 0.001f);
  EXPECT_EQ(p.value("w"), before);
  EXPECT_EQ(state.step, 1);
}

TEST(Adam, OnlyNonzeroGradientEntriesMove) {
  ParamStore p;
  p.add("w", Tensor({1, 3}, {1, 1, 1}));
  p.grad("w")[1] = -2.0f;
  auto state = AdamState::for_params(p);
  adam_step(p, state, 0.01f);
  EXPECT_EQ(p.value("w")[0], 1.0f);
  EXPECT_GT(p.value("w")[1], 1.0f);
  EXPECT_EQ(p.value("w")[2], 1.0f);
}

TEST(Adam, ConstantGradientStepsDoNotGrow) {
  ParamStore p;
  p.add("w", Tensor::matrix(1, 1, 0.0f));
  auto state = AdamState::for_params(p);
  float prev = 0.0f, last_delta = INFINITY;
  for (int i = 0; i < 2; ++i) {
    p.grad("w")[0] = 0.5f;
    adam_step(p, state, 0.001f);
    const float delta = std::abs(p.value("w")[0] - prev);
    EXPECT_LE(delta, last_delta + 1e-9f);
    last_delta = delta;
    prev = p.value("w")[0];
  }
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  ParamStore p;
  p.add("layer/weight", Tensor::matrix(1, 2));
  p.grad("layer/weight")[1] = NAN;
  auto state = AdamState::for_params(p);
  try {
    adam_step(p, state, 0.001f);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("layer/weight"), std::string::npos);
  }
}

TEST(Adam, StateMustMirrorParams) {
  ParamStore p;
  p.add("w", Tensor::matrix(1, 1));
  ParamStore other;
  other.add("v", Tensor::matrix(1, 1));
  auto state = AdamState::for_params(other);
  EXPECT_THROW(adam_step(p, state, 0.001f), ConfigError);
}

TEST(LrSchedule, EndpointsAndMidpoint) {
  const LrSchedule s{1e-3, 1e-4, 1000};
  EXPECT_DOUBLE_EQ(lr_at(s, 0), 0.001);
  EXPECT_DOUBLE_EQ(lr_at(s, 1000), 0.0001);
  EXPECT_NEAR(lr_at(s, 500), 0.00055, 1e-15);
  EXPECT_DOUBLE_EQ(lr_at(s, 5000), 0.0001);
  for (int i = 1; i <= 1000; ++i) EXPECT_LE(lr_at(s, i), lr_at(s, i - 1));
}
