#include <gtest/gtest.h>

#include "dymen/local_attn.hpp"
#include "dymen/selector.hpp"
#include "helpers.hpp"

using namespace dymen;
using testing_util::const_from;
using testing_util::gaussian;

namespace {

SelectorParams make_params(std::size_t d, FeatureMask mask, std::size_t hidden = 0,
                           std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  return SelectorParams::make(d, 7, mask, hidden, false, rng);
}

// Only `keep` contributes: linear fusion with weight 1 on it and 0 elsewhere.
void isolate_feature(SelectorParams& p, std::size_t keep) {
  auto w = p.fusion.layers[0].weight.mutable_values();
  std::fill(w.begin(), w.end(), 0.0);
  w[keep] = 1.0;
  p.fusion.layers[0].bias.mutable_values()[0] = 0.0;
}

struct World {
  EmbeddingStore store;
  Mention mention;
};

World random_world(std::size_t n, std::size_t d, std::size_t extra, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  World w{EmbeddingStore(d), {}};
  w.mention.id = "m";
  for (std::size_t i = 0; i < n; ++i) {
    const std::string e = "c" + std::to_string(i);
    w.store.set_entity(e, gaussian(d, rng));
    w.mention.candidates.push_back({e, 1.0 / static_cast<double>(n)});
  }
  for (std::size_t i = 0; i < extra; ++i) w.store.set_entity("x" + std::to_string(i), gaussian(d, rng));
  return w;
}

oracle::Vec entity(const EmbeddingStore& s, const std::string& id) {
  const auto v = s.entity(id);
  return {v.begin(), v.end()};
}

}  // namespace

TEST(LinkedFeature, EmptyIsZero) {
  const auto f = linked_context_feature(const_from({{1, 2}}), Tensor(), Tensor::row({1, 1}), 7);
  EXPECT_EQ(f.to_vector(), (std::vector<double>{0, 0}));
}

TEST(LinkedFeature, SingleEntityIsItself) {
  const auto f = linked_context_feature(const_from({{1, 2}, {0, 1}}), const_from({{3, -1}}),
                                        Tensor::row({1, 1}), 7);
  EXPECT_EQ(f.to_vector(), (std::vector<double>{3, -1}));
}

TEST(LinkedFeature, TiedEntitiesAverage) {
  const auto f = linked_context_feature(const_from({{1, 1}}), const_from({{2, 0}, {0, 2}}),
                                        Tensor::row({1, 1}), 2);
  EXPECT_EQ(f.to_vector(), (std::vector<double>{1, 1}));
}

TEST(LinkedFeature, TopTwoOfFourMatchesOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto cands = gaussian(3, 5, rng);
    const auto linked = gaussian(4, 5, rng);
    const auto diag = gaussian(5, rng);
    const auto f = linked_context_feature(const_from(cands), const_from(linked),
                                          Tensor::row(diag), 2)
                       .to_vector();
    const auto ref = oracle::recompute_linked_feature(cands, linked, diag, 2);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(f[i], ref[i], 1e-13);
  }
}

TEST(Coherence, ZeroFeatureGivesZero) {
  auto p = make_params(3, {});
  EXPECT_EQ(coherence_score(Tensor::row({1, 2, 3}), Tensor::row({0, 0, 0}), p).item(), 0.0);
}

TEST(Coherence, AlignedCandidateIsMaximal) {
  auto p = make_params(2, {});
  const Tensor f = Tensor::row({0.6, 0.8});
  const double aligned = coherence_score(Tensor::row({0.6, 0.8}), f, p).item();
  for (double a = 0; a < 6.3; a += 0.1)
    EXPECT_LE(coherence_score(Tensor::row({std::cos(a), std::sin(a)}), f, p).item(), aligned + 1e-15);
}

TEST(Coherence, HandArithmetic) {
  auto p = make_params(3, {});
  p.b5 = Tensor::parameter({1, 3}, {2, 0.5, -1});
  EXPECT_DOUBLE_EQ(coherence_score(Tensor::row({1, 2, 3}), Tensor::row({1, 4, 2}), p).item(),
                   2 + 4 - 6);
}

TEST(Neighborhood, NoEdgesGivesZero) {
  auto w = random_world(2, 3, 1, 4);
  const std::vector<std::string> linked{"x0"};
  const auto s = neighborhood_scores(candidate_matrix(w.mention, w.store), linked, w.store,
                                     make_params(3, {}));
  EXPECT_EQ(s.to_vector(), (std::vector<double>{0, 0}));
}

TEST(Neighborhood, SingleNeighborIsDot) {
  auto w = random_world(2, 3, 2, 5);
  w.store.add_edge("x0", "x1");
  const std::vector<std::string> linked{"x0"};
  const auto s = neighborhood_scores(candidate_matrix(w.mention, w.store), linked, w.store,
                                     make_params(3, {}))
                     .to_vector();
  for (std::size_t i = 0; i < 2; ++i)
    EXPECT_NEAR(s[i],
                oracle::weighted_dot(entity(w.store, "c" + std::to_string(i)), {1, 1, 1},
                                     entity(w.store, "x1")),
                1e-14);
}

TEST(Neighborhood, UnionInFirstSeenOrder) {
  EmbeddingStore s(1);
  for (const char* e : {"a", "b", "c", "d"}) s.set_entity(e, {1});
  s.add_edge("a", "c");
  s.add_edge("a", "b");
  s.add_edge("b", "c");
  s.add_edge("b", "d");
  const std::vector<std::string> linked{"a", "b"};
  EXPECT_EQ(neighborhood(linked, s), (std::vector<std::string>{"c", "b", "d"}));
}

TEST(Neighborhood, ThreeEntityNeighborhoodMatchesOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto w = random_world(3, 4, 5, seed);
    std::map<std::string, std::vector<std::string>> edges{{"x0", {"x2", "x3"}}, {"x1", {"x3", "x4"}}};
    for (const auto& [src, dsts] : edges)
      for (const auto& dst : dsts) w.store.add_edge(src, dst);
    auto p = make_params(4, {});
    std::mt19937_64 rng(seed);
    p.b6 = Tensor::parameter({1, 4}, gaussian(4, rng));
    const std::vector<std::string> linked{"x0", "x1"};
    const auto got = neighborhood_scores(candidate_matrix(w.mention, w.store), linked, w.store, p)
                         .to_vector();
    std::map<std::string, oracle::Vec> vecs;
    for (const auto& id : w.store.entity_ids()) vecs[id] = entity(w.store, id);
    const auto ref = oracle::recompute_neighborhood_scores(
        testing_util::rows_of(candidate_matrix(w.mention, w.store)), linked, edges, vecs,
        p.b6.to_vector(), 7);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(got[i], ref[i], 1e-13);
  }
}

TEST(TypeScores, DotOrZero) {
  EmbeddingStore s(1);
  s.set_entity("a", {1});
  s.set_entity("b", {1});
  s.set_mention_type("m", {1, 2});
  s.set_entity_type("a", {3, 4});
  Mention m;
  m.id = "m";
  m.candidates = {{"a", 0.5}, {"b", 0.5}};
  EXPECT_EQ(type_scores(m, s).to_vector(), (std::vector<double>{11, 0}));
  m.id = "untyped";
  EXPECT_EQ(type_scores(m, s).to_vector(), (std::vector<double>{0, 0}));
}

TEST(CandidateDistribution, SingleCandidate) {
  auto w = random_world(1, 3, 0, 6);
  auto p = make_params(3, {}, 4);
  const auto out = candidate_distribution(w.mention, {}, w.store, p, Tensor::row({0.3}), {});
  EXPECT_EQ(out.probs.item(), 1.0);
}

TEST(CandidateDistribution, PriorOnlyFusion) {
  auto w = random_world(2, 3, 0, 7);
  w.mention.candidates[0].prior = 0.8;
  w.mention.candidates[1].prior = 0.2;
  auto p = make_params(3, {});
  isolate_feature(p, static_cast<std::size_t>(Feature::prior));
  const auto probs =
      candidate_distribution(w.mention, {}, w.store, p, Tensor::row({5, -5}), {}).probs.to_vector();
  const auto ref = oracle::softmax({0.8, 0.2});
  EXPECT_NEAR(probs[0], ref[0], 1e-15);
  EXPECT_NEAR(probs[1], ref[1], 1e-15);
}

TEST(CandidateDistribution, WithoutTypeAndNeighborhood) {
  const auto mask = FeatureMask::parse("w/o T-K");
  EXPECT_EQ(mask.count(), 3u);
  EXPECT_FALSE(mask.has(Feature::type));
  EXPECT_FALSE(mask.has(Feature::neighborhood));
  auto w = random_world(4, 3, 1, 8);
  auto p = make_params(3, mask, 5);
  const std::vector<std::string> linked{"x0"};
  const auto out =
      candidate_distribution(w.mention, linked, w.store, p, Tensor::row({1, 2, 3, 4}), {});
  EXPECT_EQ(out.features.cols(), 3u);
  double s = 0;
  for (double v : out.probs.values()) s += v;
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(CandidateDistribution, PermutationEquivariant) {
  auto w = random_world(3, 4, 2, 9);
  w.store.add_edge("x0", "x1");
  auto p = make_params(4, {}, 6);
  const std::vector<std::string> linked{"x0", "x1"};
  const auto a =
      candidate_distribution(w.mention, linked, w.store, p, Tensor::row({0.1, 0.5, 0.4}), {})
          .probs.to_vector();
  std::swap(w.mention.candidates[0], w.mention.candidates[2]);
  const auto b =
      candidate_distribution(w.mention, linked, w.store, p, Tensor::row({0.4, 0.5, 0.1}), {})
          .probs.to_vector();
  EXPECT_NEAR(a[0], b[2], 1e-14);
  EXPECT_NEAR(a[2], b[0], 1e-14);
  EXPECT_NEAR(a[1], b[1], 1e-14);
}

TEST(CandidateDistribution, EmptyHistoryLocalOnlyFollowsLocalScores) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    auto w = random_world(4, 3, 0, 100 + trial);
    auto p = make_params(3, FeatureMask::parse("local"));
    p.fusion.layers[0].weight.mutable_values()[0] = std::abs(p.fusion.layers[0].weight[0]) + 0.1;
    const auto psi = gaussian(4, rng);
    const auto probs = candidate_distribution(w.mention, {}, w.store, p, Tensor::row(psi), {})
                           .probs.to_vector();
    EXPECT_EQ(std::max_element(probs.begin(), probs.end()) - probs.begin(),
              std::max_element(psi.begin(), psi.end()) - psi.begin());
  }
}

TEST(CandidateDistribution, ZScoreKeepsDistribution) {
  auto w = random_world(3, 3, 1, 11);
  std::mt19937_64 rng(1);
  auto p = SelectorParams::make(3, 7, {}, 4, true, rng);
  const std::vector<std::string> linked{"x0"};
  const auto out = candidate_distribution(w.mention, linked, w.store, p, Tensor::row({1, 2, 3}), {});
  double s = 0;
  for (double v : out.probs.values()) s += v;
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(CandidateDistribution, GradientCheck) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto w = random_world(3, 4, 3, seed + 40);
    w.store.add_edge("x0", "x2");
    w.store.set_mention_type("m", {1, 0.5});
    w.store.set_entity_type("c1", {0.2, 1});
    auto p = make_params(4, {}, 5, seed);
    std::mt19937_64 rng(seed);
    p.b5 = Tensor::parameter({1, 4}, gaussian(4, rng));
    p.b6 = Tensor::parameter({1, 4}, gaussian(4, rng));
    Tensor psi = Tensor::parameter({1, 3}, gaussian(3, rng));
    ParamSet ps;
    p.register_params(ps, "s");
    std::vector<Tensor> params{psi};
    for (auto& [name, t] : ps.items()) params.push_back(t);
    const std::vector<std::string> linked{"x0", "x1"};
    auto loss = [&] {
      return log(element(candidate_distribution(w.mention, linked, w.store, p, psi, {}).probs, 0, 1));
    };
    EXPECT_LE(testing_util::max_fd_error(loss, params), 1e-4) << "seed " << seed;
  }
}

TEST(FeatureMask, ParseAndPrint) {
  EXPECT_EQ(FeatureMask::parse("all").count(), 5u);
  EXPECT_EQ(FeatureMask::parse("prior,local").to_string(), "prior,local");
  EXPECT_THROW(FeatureMask::parse("prior,colour"), std::invalid_argument);
  EXPECT_EQ(FeatureMask::parse(FeatureMask::parse("w/o T-K").to_string()).enabled,
            FeatureMask::parse("w/o T-K").enabled);
}
