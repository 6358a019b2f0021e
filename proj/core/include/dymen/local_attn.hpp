#pragma once

// Attention-based local scorer: each candidate is scored by a diagonal
// bilinear form against a hard-attention summary of the context words.

#include <cstddef>
#include <random>

#include "dymen/corpus.hpp"
#include "dymen/nn.hpp"
#include "dymen/tensor.hpp"

namespace dymen {

struct LocalAttnParams {
  Tensor b1;            // 1 x d, diagonal of the scoring matrix
  Tensor context_attn;  // 1 x d, diagonal used to score context words
  std::size_t top_r = 25;

  static LocalAttnParams make(std::size_t dim, std::size_t top_r = 25);
  void register_params(ParamSet& ps, const std::string& prefix) const;
};

/// n x d matrix of candidate entity vectors, in candidate order.
Tensor candidate_matrix(const Mention& mention, const EmbeddingStore& store);
/// k x d matrix of word vectors.
Tensor word_matrix(std::span<const std::string> words, const EmbeddingStore& store);

/// f(context): each context word is scored by its best match against any
/// candidate, the top_r words are kept, and their vectors are averaged with
/// softmax weights over the kept scores. Returns 1 x d.
Tensor context_feature(const Mention& mention, const EmbeddingStore& store,
                       const LocalAttnParams& params);

/// 1 x n local scores e_i^T diag(b1) f(context).
Tensor local_scores_attn(const Mention& mention, const EmbeddingStore& store,
                         const LocalAttnParams& params);
/// Same, reusing an already computed context feature.
Tensor local_scores_attn(const Tensor& candidates, const Tensor& feature,
                         const LocalAttnParams& params);

}  // namespace dymen
