#include <gtest/gtest.h>

#include <cmath>

#include "dymen/rewards.hpp"
#include "oracle.hpp"

using namespace dymen;

namespace {

std::vector<bool> bits(unsigned p, std::size_t L) {
  std::vector<bool> f(L);
  for (std::size_t i = 0; i < L; ++i) f[i] = (p >> i) & 1u;
  return f;
}

const TransitionRewards kR21{0, -2, -1, 0};

}  // namespace

TEST(Rewards, WorkedExampleR1) {
  EXPECT_DOUBLE_EQ(reward_base(RewardKind::r1, {parse_flags("0101111")}), -6);
  EXPECT_DOUBLE_EQ(reward_base(RewardKind::r1, {parse_flags("1110001")}), -3);
  EXPECT_DOUBLE_EQ(reward_base(RewardKind::r1, {parse_flags("1001111")}), -5);
}

TEST(Rewards, WorkedExampleR3) {
  EXPECT_NEAR(reward_base(RewardKind::r3, {parse_flags("0101111")}), -24.0 / 7, 1e-12);
  EXPECT_NEAR(reward_base(RewardKind::r3, {parse_flags("1110001")}), -27.0 / 7, 1e-12);
  EXPECT_NEAR(reward_base(RewardKind::r3, {parse_flags("1001111")}), -23.0 / 7, 1e-12);
}

TEST(Rewards, WorkedExampleR2) {
  const EpisodeOutcome s2{parse_flags("1110001")};
  EXPECT_DOUBLE_EQ(reward_base(RewardKind::r2_fixed, s2, kR21), -4);
  const auto c = count_transitions(s2.flags);
  EXPECT_EQ(c.tt, 3u);
  EXPECT_EQ(c.tf, 1u);
  EXPECT_EQ(c.ff, 2u);
  EXPECT_EQ(c.ft, 1u);
}

TEST(Rewards, AlternatingTransitions) {
  EXPECT_DOUBLE_EQ(reward_base(RewardKind::r2_fixed, {parse_flags("1010")}, kR21), -4);
}

TEST(Rewards, AllCorrect) {
  const EpisodeOutcome o{parse_flags("11111")};
  EXPECT_DOUBLE_EQ(reward_r1(o, 5), 0.2);
  EXPECT_DOUBLE_EQ(reward_r3(o, 5), 0.0);
  EXPECT_DOUBLE_EQ(reward_r2(o, 5, kR21), 0.0);
  const std::vector<double> probs(5, 0.5);
  EXPECT_DOUBLE_EQ(reward(RewardKind::r2_prob, o, 5, {}, probs), 0.0);
}

TEST(Rewards, FirstMentionWrongIsWorstR1) {
  for (std::size_t L = 1; L <= 8; ++L) {
    const double worst = (-static_cast<double>(L) + 1) / static_cast<double>(L);
    for (unsigned p = 0; p < (1u << L); ++p) {
      const EpisodeOutcome o{bits(p, L)};
      EXPECT_GE(reward_r1(o, L), worst - 1e-15);
    }
  }
}

TEST(Rewards, ProbabilityVariantUsesFailingStep) {
  const EpisodeOutcome o{parse_flags("1001")};
  const std::vector<double> p{0.9, 0.25, 0.5, 0.8};
  // TT, TF at step 2, FF at step 3, FT
  EXPECT_DOUBLE_EQ(reward_base(RewardKind::r2_prob, o, {}, p), -4 * 0.25 - 4 * 0.5);
  EXPECT_THROW(reward_base(RewardKind::r2_prob, o), std::invalid_argument);
}

TEST(Rewards, NonzeroFTIsIncluded) {
  const EpisodeOutcome o{parse_flags("1110001")};
  EXPECT_DOUBLE_EQ(reward_base(RewardKind::r2_fixed, o, {0, -2, -1, 5}), -4 + 5);
}

TEST(Rewards, DiscountIsGeometric) {
  for (RewardKind k : {RewardKind::r1, RewardKind::r2_fixed, RewardKind::r3}) {
    const EpisodeOutcome o{parse_flags("1011001"), 0.8};
    const auto trace = reward_trace(k, o, kR21);
    ASSERT_EQ(trace.size(), 7u);
    for (std::size_t t = 1; t <= 7; ++t)
      EXPECT_NEAR(trace[t - 1], std::pow(0.8, 7.0 - t) * trace[6], 1e-15);
    EXPECT_NEAR(trace[6] * 7, reward_base(k, o, kR21), 1e-12);
  }
}

TEST(Rewards, MatchOracleOnEveryPattern) {
  for (std::size_t L = 1; L <= 8; ++L)
    for (unsigned p = 0; p < (1u << L); ++p) {
      const auto f = bits(p, L);
      EXPECT_NEAR(reward_base(RewardKind::r1, {f}), oracle::r1_base(f), 1e-12);
      EXPECT_NEAR(reward_base(RewardKind::r3, {f}), oracle::r3_base(f), 1e-12);
      EXPECT_NEAR(reward_base(RewardKind::r2_fixed, {f}, kR21), oracle::r2_base(f, {0, -2, -1, 0}),
                  1e-12);
    }
}

TEST(Rewards, AllCorrectMaximizesEveryReward) {
  for (std::size_t L = 1; L <= 8; ++L) {
    const std::vector<bool> perfect(L, true);
    for (RewardKind k : {RewardKind::r1, RewardKind::r2_fixed, RewardKind::r3}) {
      const double best = reward_base(k, {perfect}, kR21);
      for (unsigned p = 0; p + 1 < (1u << L); ++p)
        EXPECT_LT(reward_base(k, {bits(p, L)}, kR21), best);
    }
  }
}

TEST(Rewards, R3OneErrorBeatsTwo) {
  for (std::size_t L = 2; L <= 8; ++L) {
    double worst_one = 1e300, best_two = -1e300;
    for (unsigned p = 0; p < (1u << L); ++p) {
      const auto f = bits(p, L);
      const auto errors = std::count(f.begin(), f.end(), false);
      const double r = reward_base(RewardKind::r3, {f});
      if (errors == 1) worst_one = std::min(worst_one, r);
      if (errors == 2) best_two = std::max(best_two, r);
    }
    EXPECT_GT(worst_one, best_two);
  }
}

TEST(Rewards, R3ExtraErrorAlwaysCosts) {
  for (std::size_t L = 1; L <= 8; ++L)
    for (unsigned p = 0; p < (1u << L); ++p) {
      const auto f = bits(p, L);
      for (std::size_t i = 0; i < L; ++i) {
        if (!f[i]) continue;
        auto g = f;
        g[i] = false;
        EXPECT_LT(reward_base(RewardKind::r3, {g}), reward_base(RewardKind::r3, {f}));
      }
    }
}

TEST(Rewards, R3PrefersLaterErrors) {
  for (std::size_t L = 2; L <= 8; ++L)
    for (unsigned p = 0; p < (1u << L); ++p) {
      const auto f = bits(p, L);
      for (std::size_t i = 0; i + 1 < L; ++i) {
        if (f[i] || !f[i + 1]) continue;
        auto g = f;
        g[i] = true;
        g[i + 1] = false;  // the error moves one step later
        EXPECT_GT(reward_base(RewardKind::r3, {g}), reward_base(RewardKind::r3, {f}));
      }
    }
}

TEST(Rewards, InvalidInputs) {
  EXPECT_THROW(reward_r1({parse_flags("101")}, 0), std::invalid_argument);
  EXPECT_THROW(reward_r1({parse_flags("101")}, 4), std::invalid_argument);
  EXPECT_THROW(reward_r1({{}}, 1), std::invalid_argument);
  EXPECT_THROW(reward_r3({parse_flags("1"), 0.0}, 1), std::invalid_argument);
  EXPECT_THROW(parse_flags("10x"), std::invalid_argument);
  EXPECT_THROW(parse_reward_kind("R4"), std::invalid_argument);
  EXPECT_EQ(parse_reward_kind("R2-2"), RewardKind::r2_prob);
  EXPECT_EQ(to_string(RewardKind::r2_fixed), "R2-1");
  EXPECT_EQ(first_error_index(parse_flags("111")), 4u);
}

TEST(Oracle, WorkedExampleReconstructionIsUnique) {
  const auto sol = oracle::solve_worked_example_flags();
  ASSERT_EQ(sol.s1.size(), 1u);
  ASSERT_EQ(sol.s2.size(), 1u);
  ASSERT_EQ(sol.s3.size(), 1u);
  EXPECT_EQ(sol.s1[0], parse_flags("0101111"));
  EXPECT_EQ(sol.s2[0], parse_flags("1110001"));
  EXPECT_EQ(sol.s3[0], parse_flags("1001111"));
}
