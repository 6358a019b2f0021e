#include <gtest/gtest.h>

#include <numeric>

#include "dymen/local_transformer.hpp"
#include "helpers.hpp"

using namespace dymen;
using testing_util::gaussian;

namespace {

const TransformerConfig kSmall{1, 2, 3, 8, 4, 16, 8, 0.0};

struct Instance {
  EmbeddingStore store;
  Mention mention;
};

// `left` words, the one-word surface, then `right` words.
Instance make(std::size_t left, std::size_t right, std::size_t cands, std::size_t d,
              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Instance in{EmbeddingStore(d), {}};
  in.mention.id = "m";
  auto word = [&](const std::string& w) {
    in.store.set_word(w, gaussian(d, rng));
    return w;
  };
  for (std::size_t i = 0; i < left; ++i) in.mention.context_window.push_back(word("l" + std::to_string(i)));
  in.mention.surface = {word("s")};
  for (std::size_t i = 0; i < right; ++i) in.mention.context_window.push_back(word("r" + std::to_string(i)));
  in.mention.left_context = left;
  for (std::size_t i = 0; i < cands; ++i) {
    const std::string e = "e" + std::to_string(i);
    in.store.set_entity(e, gaussian(d, rng));
    in.store.set_entity_surface(e, {word(e + "_name")});
    in.mention.candidates.push_back({e, 0.5});
  }
  return in;
}

TransformerLocalParams params_for(std::size_t d, std::uint64_t seed,
                                  TransformerAblation ab = {}) {
  std::mt19937_64 rng(seed);
  auto p = TransformerLocalParams::make(d, kSmall, rng);
  p.ablation = ab;
  return p;
}

}  // namespace

TEST(TransformerInput, LayoutForThreeWordsTwoCandidates) {
  const auto in = make(1, 1, 2, 4, 1);
  const auto x = build_input(in.mention, in.store, params_for(4, 1));
  EXPECT_EQ(x.rows.rows(), 9u);
  EXPECT_EQ(x.sep_rows, (std::vector<std::size_t>{4, 6, 8}));
  EXPECT_EQ(x.candidate_rows, (std::vector<std::size_t>{5, 7}));
  EXPECT_EQ(x.mention_row, 2u);
  EXPECT_EQ(x.types, (std::vector<std::size_t>{0, 0, 0, 0, 1, 1, 1, 1, 1}));
  EXPECT_EQ(x.segments, (std::vector<std::size_t>{0, 0, 0, 0, 1, 1, 2, 2, 2}));
}

TEST(TransformerInput, CandidatesShareTheMentionPosition) {
  const auto in = make(2, 1, 3, 4, 2);
  const auto x = build_input(in.mention, in.store, params_for(4, 2));
  for (std::size_t r : x.candidate_rows) EXPECT_EQ(x.positions[r], x.mention_row);
  for (std::size_t r : x.sep_rows) EXPECT_EQ(x.positions[r], r);
}

TEST(TransformerInput, ZeroTablesGiveZeroInput) {
  auto in = make(1, 1, 2, 3, 3);
  for (const auto& id : in.store.word_ids()) in.store.set_word(id, {0, 0, 0});
  auto p = params_for(3, 3);
  for (Tensor* t : {&p.b2, &p.type_embed, &p.segment_embed, &p.position_embed, &p.cls, &p.sep})
    std::fill(t->mutable_values().begin(), t->mutable_values().end(), 0.0);
  const auto x = build_input(in.mention, in.store, p);
  for (double v : x.rows.values()) EXPECT_EQ(v, 0.0);
}

TEST(TransformerInput, LimitsAreEnforced) {
  const auto in = make(6, 6, 2, 3, 4);
  EXPECT_THROW(build_input(in.mention, in.store, params_for(3, 4)), std::invalid_argument);
  const auto many = make(1, 1, 8, 3, 4);
  EXPECT_THROW(build_input(many.mention, many.store, params_for(3, 4)), std::invalid_argument);
}

TEST(TransformerInput, MissingSurfaceFallsBackToProjection) {
  EmbeddingStore s(2);
  s.set_entity("e", {1, 2});
  Mention m;
  m.id = "m";
  m.candidates = {{"e", 1.0}};
  auto p = params_for(2, 5);
  const auto tok = candidate_token_embeddings(m, s, p).to_vector();
  const auto b2 = p.b2.to_vector();
  EXPECT_DOUBLE_EQ(tok[0], 1 * b2[0] + 2 * b2[2]);
  EXPECT_DOUBLE_EQ(tok[1], 1 * b2[1] + 2 * b2[3]);
}

TEST(TransformerHeads, N3IsADistribution) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto in = make(2, 2, 1 + seed % 4, 4, seed);
    const auto n3 = local_scores_transformer(in.mention, in.store, params_for(4, seed), {});
    double s = 0;
    for (double v : n3.values()) {
      EXPECT_GT(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(TransformerHeads, SingleCandidateIsCertain) {
  const auto in = make(1, 1, 1, 4, 7);
  EXPECT_EQ(local_scores_transformer(in.mention, in.store, params_for(4, 7), {}).item(), 1.0);
}

TEST(TransformerHeads, DroppingBothHeadsIsUniform) {
  TransformerAblation ab;
  ab.drop_n1 = ab.drop_n2 = true;
  const auto in = make(2, 1, 4, 4, 8);
  const Tensor n3 = local_scores_transformer(in.mention, in.store, params_for(4, 8, ab), {});
  for (double v : n3.values()) EXPECT_EQ(v, 0.25);
}

TEST(TransformerHeads, PermutationEquivariantWithTiedSegments) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto in = make(2, 1, 3, 4, seed);
    auto p = params_for(4, seed + 50);
    auto seg = p.segment_embed.mutable_values();
    for (std::size_t r = 1; r < p.config.max_segments; ++r)
      std::copy(seg.begin(), seg.begin() + 4, seg.begin() + static_cast<std::ptrdiff_t>(4 * r));
    const auto a = local_scores_transformer(in.mention, in.store, p, {}).to_vector();
    std::swap(in.mention.candidates[0], in.mention.candidates[1]);
    const auto b = local_scores_transformer(in.mention, in.store, p, {}).to_vector();
    EXPECT_NEAR(a[0], b[1], 1e-12);
    EXPECT_NEAR(a[1], b[0], 1e-12);
    EXPECT_NEAR(a[2], b[2], 1e-12);
  }
}

TEST(TransformerHeads, PositionGradientFlowsOnlyThroughSharedSlot) {
  const auto in = make(1, 1, 2, 4, 9);
  auto p = params_for(4, 9);
  p.position_embed.zero_grad();
  backward(sum(mul(local_scores_transformer(in.mention, in.store, p, {}), Tensor::row({1.0, -1.0}))));
  const auto g = p.position_embed.grad();
  auto row_norm = [&](std::size_t r) {
    double s = 0;
    for (std::size_t j = 0; j < 4; ++j) s += std::abs(g[r * 4 + j]);
    return s;
  };
  // Sequence slots 5 and 7 hold candidates, which read position 2 instead.
  EXPECT_EQ(row_norm(5), 0.0);
  EXPECT_EQ(row_norm(7), 0.0);
  EXPECT_GT(row_norm(2), 0.0);
  for (std::size_t r = 9; r < p.config.max_positions; ++r) EXPECT_EQ(row_norm(r), 0.0);
}

TEST(TransformerHeads, DropPositionMakesContextOrderIrrelevant) {
  TransformerAblation ab;
  ab.drop_position = true;
  auto in = make(2, 1, 2, 4, 10);
  auto p = params_for(4, 10, ab);
  const auto a = transformer_forward(in.mention, in.store, p, {});
  std::swap(in.mention.context_window[0], in.mention.context_window[1]);
  const auto b = transformer_forward(in.mention, in.store, p, {});
  const std::size_t cls[] = {0};
  const auto oa = select_rows(a.encoded, cls).to_vector();
  const auto ob = select_rows(b.encoded, cls).to_vector();
  for (std::size_t i = 0; i < oa.size(); ++i) EXPECT_NEAR(oa[i], ob[i], 1e-12);
}

TEST(TransformerHeads, FullStackGradientCheck) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto in = make(1, 2, 2, 4, seed + 20);
    auto p = params_for(4, seed + 20);
    ParamSet ps;
    p.register_params(ps, "t");
    std::vector<Tensor> params;
    for (auto& [name, t] : ps.items()) params.push_back(t);
    auto loss = [&] {
      const auto s = transformer_forward(in.mention, in.store, p, {});
      return add(sum(mul(s.n3, Tensor::row({0.7, -1.3}))), scale(sum(s.n2), 0.1));
    };
    EXPECT_LE(testing_util::max_fd_error(loss, params), 1e-4) << "seed " << seed;
  }
}

TEST(TransformerAblation, ParsesFlags) {
  const auto a = TransformerAblation::parse({"drop_N1", "drop_position"});
  EXPECT_TRUE(a.drop_n1 && a.drop_position && !a.drop_n2);
  EXPECT_EQ(a.flags(), (std::vector<std::string>{"drop_position", "drop_N1"}));
  EXPECT_THROW(TransformerAblation::parse({"drop_everything"}), std::invalid_argument);
}
