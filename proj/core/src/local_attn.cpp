#include "dymen/local_attn.hpp"

#include <stdexcept>

namespace dymen {

LocalAttnParams LocalAttnParams::make(std::size_t dim, std::size_t top_r) {
  if (top_r == 0) throw std::invalid_argument("local attention: top_r must be >= 1");
  return LocalAttnParams{ones_param({1, dim}), ones_param({1, dim}), top_r};
}

void LocalAttnParams::register_params(ParamSet& ps, const std::string& prefix) const {
  ps.add(prefix + ".b1", b1);
  ps.add(prefix + ".context_attn", context_attn);
}

Tensor candidate_matrix(const Mention& mention, const EmbeddingStore& store) {
  if (mention.candidates.empty())
    throw std::invalid_argument("mention '" + mention.id + "' has no candidates");
  const std::size_t d = store.dim();
  std::vector<double> v;
  v.reserve(mention.candidates.size() * d);
  for (const CandidateEntity& c : mention.candidates) {
    if (!store.has_entity(c.entity_id))
      throw std::invalid_argument("candidate '" + c.entity_id + "' of mention '" +
                                  mention.id + "' has no embedding");
    const auto e = store.entity(c.entity_id);
    v.insert(v.end(), e.begin(), e.end());
  }
  return Tensor::constant({mention.candidates.size(), d}, std::move(v));
}

Tensor word_matrix(std::span<const std::string> words, const EmbeddingStore& store) {
  const std::size_t d = store.dim();
  std::vector<double> v;
  v.reserve(words.size() * d);
  for (const std::string& w : words) {
    const auto x = store.word(w);
    v.insert(v.end(), x.begin(), x.end());
  }
  return Tensor::constant({words.size(), d}, std::move(v));
}

Tensor context_feature(const Mention& mention, const EmbeddingStore& store,
                       const LocalAttnParams& params) {
  if (mention.context_window.empty())
    throw std::invalid_argument("mention '" + mention.id + "' has an empty context");
  Tensor cands = candidate_matrix(mention, store);
  Tensor words = word_matrix(mention.context_window, store);
  // scores[i][k] = cand_i^T diag(A) word_k; each word keeps its best candidate.
  Tensor word_scores = col_max(matmul(scale_cols(cands, params.context_attn),
                                      transpose(words)));
  const auto keep = top_k_indices(word_scores.values(), params.top_r);
  Tensor weights = softmax(select_cols(word_scores, keep));
  return matmul(weights, select_rows(words, keep));
}

Tensor local_scores_attn(const Tensor& candidates, const Tensor& feature,
                         const LocalAttnParams& params) {
  if (feature.cols() != candidates.cols())
    throw std::invalid_argument("local_scores_attn: feature dimension mismatch");
  return transpose(matmul(scale_cols(candidates, params.b1), transpose(feature)));
}

Tensor local_scores_attn(const Mention& mention, const EmbeddingStore& store,
                         const LocalAttnParams& params) {
  return local_scores_attn(candidate_matrix(mention, store),
                           context_feature(mention, store, params), params);
}

}  // namespace dymen
