#pragma once

// Candidate entity selection: coherence with previously linked entities,
// KG-neighborhood coherence, prior, type and local features fused by a
// feed-forward network into a distribution over the candidates.

#include <array>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dymen/corpus.hpp"
#include "dymen/nn.hpp"
#include "dymen/tensor.hpp"

namespace dymen {

enum class Feature : std::size_t { coherence = 0, prior, type, neighborhood, local };
inline constexpr std::size_t kFeatureCount = 5;

struct FeatureMask {
  std::array<bool, kFeatureCount> enabled{true, true, true, true, true};

  bool has(Feature f) const { return enabled[static_cast<std::size_t>(f)]; }
  std::size_t count() const;
  /// "all", "w/o T-K" (drops type and neighborhood), or a comma list of
  /// feature names.
  static FeatureMask parse(const std::string& spec);
  std::string to_string() const;
};

struct SelectorParams {
  Tensor b5;  // 1 x d, coherence with linked entities
  Tensor b6;  // 1 x d, coherence with their KG neighborhood
  std::size_t top_k = 7;
  FeatureMask mask;
  bool z_normalize = false;
  FeedForward fusion;  // mask.count() -> ... -> 1, applied per candidate

  /// fusion_hidden = 0 gives a single linear fusion layer.
  static SelectorParams make(std::size_t dim, std::size_t top_k, FeatureMask mask,
                             std::size_t fusion_hidden, bool z_normalize,
                             std::mt19937_64& rng);
  void register_params(ParamSet& ps, const std::string& prefix) const;
};

/// f(C): each linked entity is scored by its best match against the current
/// candidates, the top_k are kept and averaged with softmax weights. Empty
/// linked set -> zero vector. candidates n x d, linked m x d; returns 1 x d.
Tensor linked_context_feature(const Tensor& candidates, const Tensor& linked,
                              const Tensor& diag, std::size_t top_k);

/// e^T diag(b5) f for one 1 x d candidate vector.
Tensor coherence_score(const Tensor& candidate, const Tensor& feature,
                       const SelectorParams& params);

/// Union of KG neighbors of the linked entities, first-seen order.
std::vector<std::string> neighborhood(std::span<const std::string> linked,
                                      const EmbeddingStore& store);

/// 1 x n neighborhood coherence of every candidate (zeros if the
/// neighborhood is empty).
Tensor neighborhood_scores(const Tensor& candidates, std::span<const std::string> linked,
                           const EmbeddingStore& store, const SelectorParams& params);

/// 1 x n mention-entity type feature: dot product of the mention's and the
/// entity's type vectors, 0 when either is missing.
Tensor type_scores(const Mention& mention, const EmbeddingStore& store);

struct SelectorOutput {
  Tensor features;  // n x mask.count(), before normalization
  Tensor probs;     // 1 x n
};

/// P(e | m) over the mention's candidates given previously linked entities.
SelectorOutput candidate_distribution(const Mention& mention,
                                      std::span<const std::string> linked,
                                      const EmbeddingStore& store,
                                      const SelectorParams& params, const Tensor& psi,
                                      const ForwardContext& ctx);

}  // namespace dymen
