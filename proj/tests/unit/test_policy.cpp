#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "dymen/policy.hpp"
#include "helpers.hpp"

using namespace dymen;
using testing_util::const_from;
using testing_util::gaussian;

namespace {

PolicyParams random_params(std::size_t d, std::size_t k, std::mt19937_64& rng) {
  PolicyParams p = PolicyParams::make(d, k);
  p.b3 = testing_util::param_from({gaussian(2 * d, rng)});
  p.b4 = testing_util::param_from({gaussian(2 * d, rng)});
  p.initial_pair = testing_util::param_from({gaussian(2 * d, rng)});
  return p;
}

LinkingState state_from(const oracle::Mat& rows) {
  LinkingState s;
  for (const auto& r : rows) s.history.push_back(Tensor::row(r));
  return s;
}

}  // namespace

TEST(ActionRepresentation, SingleCandidate) {
  const auto d = action_representation(Tensor::row({1, 2}), Tensor::row({1.0}),
                                       Tensor::constant({1, 2}, {3, 4}));
  EXPECT_EQ(d.to_vector(), (std::vector<double>{1, 2, 3, 4}));
}

TEST(ActionRepresentation, OpposedCandidatesCancel) {
  const auto d = action_representation(Tensor::row({1, 2}), Tensor::row({0.5, 0.5}),
                                       Tensor::constant({2, 2}, {3, -4, -3, 4}));
  EXPECT_EQ(d.to_vector(), (std::vector<double>{1, 2, 0, 0}));
}

TEST(ActionRepresentation, NormalizedScoresKeepMentionHalf) {
  std::mt19937_64 rng(1);
  const auto psi = oracle::softmax(gaussian(3, rng));
  const auto m = gaussian(4, rng);
  const auto cands = gaussian(3, 4, rng);
  const auto d =
      action_representation(Tensor::row(m), Tensor::row(psi), const_from(cands)).to_vector();
  const auto ref = oracle::recompute_action_representation(m, psi, cands);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(d[i], m[i], 1e-15);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(d[i], ref[i], 1e-14);
}

TEST(StateRelevance, SingleActionIsBilinear) {
  std::mt19937_64 rng(2);
  auto p = random_params(2, 7, rng);
  const auto hist = gaussian(3, 4, rng);
  const auto act = gaussian(4, rng);
  const auto c = state_relevance(const_from(hist), const_from({act}), p).to_vector();
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_NEAR(c[i], oracle::weighted_dot(act, p.b3.to_vector(), hist[i]), 1e-14);
}

TEST(StateRelevance, ZeroDiagonal) {
  std::mt19937_64 rng(3);
  auto p = random_params(2, 7, rng);
  std::fill(p.b3.mutable_values().begin(), p.b3.mutable_values().end(), 0.0);
  const Tensor rel = state_relevance(const_from(gaussian(3, 4, rng)), const_from(gaussian(2, 4, rng)), p);
  for (double c : rel.values()) EXPECT_EQ(c, 0.0);
}

TEST(StateRelevance, TwoActionsBruteForceTable) {
  std::mt19937_64 rng(4);
  auto p = random_params(2, 7, rng);
  const auto hist = gaussian(3, 4, rng);
  const auto acts = gaussian(2, 4, rng);
  const auto c = state_relevance(const_from(hist), const_from(acts), p).to_vector();
  for (std::size_t i = 0; i < 3; ++i) {
    const double t0 = oracle::weighted_dot(acts[0], p.b3.to_vector(), hist[i]);
    const double t1 = oracle::weighted_dot(acts[1], p.b3.to_vector(), hist[i]);
    EXPECT_NEAR(c[i], std::max(t0, t1), 1e-14);
  }
}

TEST(StateRelevance, EmptyInputsThrow) {
  auto p = PolicyParams::make(1);
  EXPECT_THROW(state_relevance(Tensor::zeros({0, 2}), Tensor::zeros({1, 2}), p), std::invalid_argument);
  EXPECT_THROW(state_relevance(Tensor::zeros({1, 2}), Tensor::zeros({0, 2}), p), std::invalid_argument);
}

TEST(SelectAction, SingleActionIsCertain) {
  std::mt19937_64 rng(5);
  auto p = random_params(2, 7, rng);
  const auto c = select_action(state_from(gaussian(2, 4, rng)), const_from(gaussian(1, 4, rng)), p,
                               SelectMode::greedy, nullptr);
  EXPECT_EQ(c.distribution.item(), 1.0);
  EXPECT_EQ(c.log_prob.item(), 0.0);
}

TEST(SelectAction, IdenticalActionsAreEquallyLikely) {
  std::mt19937_64 rng(6);
  auto p = random_params(2, 7, rng);
  const auto a = gaussian(4, rng);
  const auto c = select_action(state_from(gaussian(3, 4, rng)), const_from({a, a}), p,
                               SelectMode::greedy, nullptr);
  EXPECT_EQ(c.distribution.to_vector(), (std::vector<double>{0.5, 0.5}));
}

TEST(SelectAction, MatchesOracleWithTopK) {
  std::mt19937_64 rng(7);
  auto p = random_params(2, 2, rng);
  const auto hist = gaussian(4, 4, rng);
  const auto acts = gaussian(3, 4, rng);
  const auto c = select_action(state_from(hist), const_from(acts), p, SelectMode::greedy, nullptr);
  const auto ref = oracle::recompute_policy_distribution(hist, acts, p.b3.to_vector(),
                                                         p.b4.to_vector(), 2);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(c.distribution[i], ref[i], 1e-12);
  EXPECT_EQ(c.evidence.size(), 2u);
}

TEST(SelectAction, SmallHistoryUsesEverything) {
  std::mt19937_64 rng(8);
  auto p = random_params(2, 7, rng);
  const auto hist = gaussian(4, 4, rng);  // t = 3
  const auto c = select_action(state_from(hist), const_from(gaussian(2, 4, rng)), p,
                               SelectMode::greedy, nullptr);
  EXPECT_EQ(c.evidence.size(), 4u);
}

TEST(SelectAction, EmptyWindowAndMissingRngThrow) {
  std::mt19937_64 rng(9);
  auto p = random_params(1, 7, rng);
  const auto s = state_from(gaussian(1, 2, rng));
  EXPECT_THROW(select_action(s, Tensor::zeros({0, 2}), p, SelectMode::greedy, nullptr),
               std::invalid_argument);
  EXPECT_THROW(select_action(s, const_from(gaussian(2, 2, rng)), p, SelectMode::sample, nullptr),
               std::invalid_argument);
}

TEST(SelectAction, SamplingFollowsTheDistribution) {
  std::mt19937_64 rng(10);
  auto p = random_params(2, 7, rng);
  const auto s = state_from(gaussian(2, 4, rng));
  const auto acts = const_from(gaussian(3, 4, rng));
  const auto probs = select_action(s, acts, p, SelectMode::greedy, nullptr).distribution.to_vector();
  std::vector<double> counts(3, 0);
  const int n = 20000;
  for (int i = 0; i < n; ++i) counts[select_action(s, acts, p, SelectMode::sample, &rng).index] += 1;
  for (std::size_t i = 0; i < 3; ++i) {
    const double se = std::sqrt(probs[i] * (1 - probs[i]) / n);
    EXPECT_NEAR(counts[i] / n, probs[i], 4 * se + 1e-9);
  }
}

TEST(SelectAction, LogProbGradientCheck) {
  std::mt19937_64 rng(11);
  for (int draw = 0; draw < 20; ++draw) {
    auto p = random_params(2, 2, rng);
    Tensor h0 = testing_util::param_from({gaussian(4, rng)});
    Tensor acts = testing_util::param_from(gaussian(3, 4, rng));
    const auto rest = gaussian(3, 4, rng);
    auto loss = [&] {
      LinkingState s;
      s.history.push_back(h0);
      for (const auto& r : rest) s.history.push_back(Tensor::row(r));
      return select_action(s, acts, p, SelectMode::greedy, nullptr).log_prob;
    };
    EXPECT_LE(testing_util::max_fd_error(loss, {p.b3, p.b4, h0, acts}), 1e-4);
  }
}

TEST(Window, RefillFromDocumentOrder) {
  auto w = ActionWindow::over(4, 3);
  EXPECT_EQ(std::vector<std::size_t>(w.actions().begin(), w.actions().end()),
            (std::vector<std::size_t>{0, 1, 2}));
  LinkingState s = LinkingState::initial(PolicyParams::make(1));
  advance(s, w, 1, Tensor::row({0}), Tensor::row({0}));
  EXPECT_EQ(std::vector<std::size_t>(w.actions().begin(), w.actions().end()),
            (std::vector<std::size_t>{0, 2, 3}));
  EXPECT_EQ(s.step(), 1u);
  EXPECT_THROW(advance(s, w, 1, Tensor::row({0}), Tensor::row({0})), std::invalid_argument);
}

TEST(Window, WideWindowCoversEverything) {
  auto w = ActionWindow::over(5, 9);
  EXPECT_EQ(w.actions().size(), 5u);
  EXPECT_THROW(ActionWindow::over(3, 0), std::invalid_argument);
}

TEST(Window, RandomPoliciesStayInsideTheWindow) {
  std::mt19937_64 rng(12);
  for (int episode = 0; episode < 1000; ++episode) {
    auto w = ActionWindow::over(5, 2);
    LinkingState s = LinkingState::initial(PolicyParams::make(1));
    std::set<std::size_t> seen;
    while (!w.empty()) {
      const auto acts = w.actions();
      const std::size_t pick = acts[std::uniform_int_distribution<std::size_t>(0, acts.size() - 1)(rng)];
      // within two of the earliest unresolved mention, counting only unresolved ones
      const auto rank = static_cast<std::size_t>(
          std::find(w.unresolved.begin(), w.unresolved.end(), pick) - w.unresolved.begin());
      EXPECT_LT(rank, 2u);
      seen.insert(pick);
      advance(s, w, pick, Tensor::row({0}), Tensor::row({0}));
    }
    EXPECT_EQ(seen.size(), 5u);
  }
}
