#include <gtest/gtest.h>

#include <cmath>

#include "vesselforge/optim.hpp"

using namespace vf;

namespace {

ParamSet<float> single(float v) {
  ParamSet<float> p;
  p.add("w", Tensor<float>(1, 1, 1, 1, v));
  return p;
}

}  // namespace

TEST(Adam, FirstStepMovesByLearningRate) {
  // With bias correction the first update is lr * g / (|g| + eps).
  auto p = single(1.0f);
  AdamState s;
  adam_step(p, single(0.5f), s, 0.01);
  EXPECT_NEAR(p.get("w")[0], 1.0f - 0.01f, 1e-6);
  EXPECT_EQ(s.step, 1u);
  EXPECT_NEAR(s.m.get("w")[0], 0.05f, 1e-7);
  EXPECT_NEAR(s.v.get("w")[0], 0.00025f, 1e-8);
}

TEST(Adam, MatchesScalarReference) {
  auto p = single(0.3f);
  AdamState s;
  double theta = 0.3, m = 0, v = 0;
  for (int t = 1; t <= 50; ++t) {
    const double g = std::sin(0.7 * t) + 0.1 * theta;
    adam_step(p, single(static_cast<float>(g)), s, 0.001);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    theta -= 0.001 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    ASSERT_NEAR(p.get("w")[0], theta, 1e-5) << t;
  }
}

TEST(Adam, MinimizesQuadratic) {
  auto p = single(5.0f);
  AdamState s;
  for (int i = 0; i < 3000; ++i) adam_step(p, single(2.0f * p.get("w")[0]), s, 0.01);
  EXPECT_NEAR(p.get("w")[0], 0.0f, 0.02);
}

TEST(Adam, RejectsMismatchedLayout) {
  auto p = single(1.0f);
  ParamSet<float> g;
  g.add("other", Tensor<float>(1, 1, 1, 1));
  AdamState s;
  EXPECT_THROW(adam_step(p, g, s, 0.01), Error);
  EXPECT_THROW(adam_step(p, single(1.0f), s, 0.0), Error);
}

TEST(Adam, StateRoundTripsThroughEntries) {
  auto p = single(1.0f);
  AdamState s;
  for (int i = 0; i < 7; ++i) adam_step(p, single(0.25f * i), s, 0.01);
  s.step = (std::uint64_t{1} << 30) + 12345;
  const auto e = adam_entries(s);
  const auto back = adam_from_entries(e, p);
  EXPECT_EQ(back, s);
}

TEST(Schedule, StepDecay) {
  LrSchedule s;
  EXPECT_DOUBLE_EQ(lr_at(s, 0), 0.001);
  EXPECT_DOUBLE_EQ(lr_at(s, 19), 0.001);
  EXPECT_DOUBLE_EQ(lr_at(s, 20), 0.001 * 0.9);
  EXPECT_DOUBLE_EQ(lr_at(s, 45), 0.001 * 0.81);
  EXPECT_THROW(lr_at(s, -1), Error);
  s.period = 0;
  EXPECT_THROW(s.validate(), Error);
}
