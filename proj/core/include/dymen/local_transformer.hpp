#pragma once

// Transformer-based local scorer. The context and every candidate are
// encoded jointly as
//
//   [CLS] w_1 ... w_k [SEP] e_1 [SEP] ... e_n [SEP]
//
// where each row is the sum of token, type, segment and position embeddings.
// Candidate rows reuse the position of the mention's first token. Two heads
// read the encoder output:
//
//   N1 = softmax(E q),  q = f2(Drop(ReLU(f1(o_cls))))
//   N2 = E o_m^T
//   N3 = softmax(f4(Drop(ReLU(f3([N1; N2])))))
//
// with E the n x d candidate entity matrix. f3/f4 are applied to each
// candidate's (N1_i, N2_i) pair with shared weights, so N3 is
// permutation-equivariant in the candidates.

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "dymen/corpus.hpp"
#include "dymen/nn.hpp"
#include "dymen/tensor.hpp"

namespace dymen {

struct TransformerConfig {
  std::size_t layers = 4;
  std::size_t heads = 6;
  std::size_t head_dim = 50;
  std::size_t ffn_width = 300;
  std::size_t head_hidden = 100;  // width of f1 and f3
  std::size_t max_positions = 64;
  std::size_t max_segments = 33;
  double dropout = 0.1;
};

struct TransformerAblation {
  bool drop_position = false;
  bool drop_type = false;
  bool drop_segment = false;
  bool drop_n1 = false;
  bool drop_n2 = false;

  /// Accepts drop_position, drop_type, drop_segment, drop_N1, drop_N2
  /// (case-insensitive on the N). Throws on anything else.
  static TransformerAblation parse(const std::vector<std::string>& flags);
  std::vector<std::string> flags() const;
};

struct TransformerLocalParams {
  TransformerConfig config;
  TransformerAblation ablation;
  std::size_t dim = 0;

  Tensor b2;              // d x d, entity space -> word space
  Tensor type_embed;      // 2 x d: T0 words, T1 entities
  Tensor segment_embed;   // max_segments x d
  Tensor position_embed;  // max_positions x d
  Tensor cls, sep;        // 1 x d
  std::vector<EncoderLayer> encoder;
  Linear f1, f2, f3, f4;

  static TransformerLocalParams make(std::size_t dim, const TransformerConfig& cfg,
                                     std::mt19937_64& rng);
  void register_params(ParamSet& ps, const std::string& prefix) const;
};

/// Encoder input plus the row bookkeeping the heads need.
struct TransformerInput {
  Tensor rows;  // seq_len x d
  std::size_t mention_row = 0;
  std::vector<std::size_t> candidate_rows;
  std::vector<std::size_t> sep_rows;
  std::vector<std::size_t> positions;  // position-embedding index per row
  std::vector<std::size_t> segments;
  std::vector<std::size_t> types;
};

TransformerInput build_input(const Mention& mention, const EmbeddingStore& store,
                             const TransformerLocalParams& params);

/// Token embeddings of the candidates: (mean surface-word vector + e B2) / 2,
/// or e B2 alone when the entity has no surface form.
Tensor candidate_token_embeddings(const Mention& mention, const EmbeddingStore& store,
                                  const TransformerLocalParams& params);

/// Intermediate outputs of the scoring heads.
struct TransformerScores {
  Tensor encoded;  // seq_len x d
  Tensor n1, n2, n3;
};

TransformerScores transformer_forward(const Mention& mention, const EmbeddingStore& store,
                                      const TransformerLocalParams& params,
                                      const ForwardContext& ctx);

/// 1 x n local distribution N3.
Tensor local_scores_transformer(const Mention& mention, const EmbeddingStore& store,
                                const TransformerLocalParams& params,
                                const ForwardContext& ctx);

}  // namespace dymen
