#include <gtest/gtest.h>

#include <cmath>

#include "dymen/nn.hpp"

using namespace dymen;

TEST(Adam, OnlyParametersWithGradientMove) {
  Tensor used = Tensor::parameter({1, 3}, {1, 2, 3});
  Tensor idle = Tensor::parameter({1, 2}, {4, 5});
  ParamSet ps;
  ps.add("used", used);
  ps.add("idle", idle);
  Adam opt(ps);
  // Only the first two entries of `used` get a gradient.
  backward(sum(mul(used, Tensor::row({1, -2, 0}))));
  opt.step(0.1);
  EXPECT_NE(used[0], 1.0);
  EXPECT_NE(used[1], 2.0);
  EXPECT_EQ(used[2], 3.0);
  EXPECT_EQ(idle.to_vector(), (std::vector<double>{4, 5}));
  for (double v : used.values()) EXPECT_TRUE(std::isfinite(v));
  // The first Adam step moves each active entry by lr against its sign.
  EXPECT_NEAR(used[0], 0.9, 1e-6);
  EXPECT_NEAR(used[1], 2.1, 1e-6);
}

TEST(ParamSet, RejectsConstants) {
  ParamSet ps;
  EXPECT_THROW(ps.add("c", Tensor::row({1})), std::invalid_argument);
}

TEST(ParamSet, SnapshotAndRestore) {
  std::mt19937_64 rng(3);
  ParamSet ps;
  Linear l = Linear::make(3, 2, rng);
  l.register_params(ps, "l");
  const auto snap = ps.values();
  l.weight.mutable_values()[0] += 1.0;
  ps.assign(snap);
  EXPECT_EQ(ps.values(), snap);
  EXPECT_EQ(ps.scalar_count(), 8u);
  EXPECT_NE(ps.find("l.weight"), nullptr);
}

TEST(Init, GlorotBounds) {
  std::mt19937_64 rng(1);
  Tensor w = glorot_param({10, 20}, rng);
  const double limit = std::sqrt(6.0 / 30.0);
  for (double v : w.values()) EXPECT_LE(std::abs(v), limit);
}

TEST(FeedForward, HiddenLayersUseRelu) {
  std::mt19937_64 rng(1);
  auto ff = FeedForward::make({3, 4, 1}, rng);
  ASSERT_EQ(ff.layers.size(), 2u);
  EXPECT_EQ(ff.activations[0], Activation::relu);
  EXPECT_EQ(ff.activations[1], Activation::none);
}
