#include "dymen/local_transformer.hpp"

#include <algorithm>
#include <cctype>
#include <mutex>
#include <stdexcept>
#include <unordered_set>

#include "dymen/local_attn.hpp"
#include "dymen/log.hpp"

namespace dymen {

TransformerAblation TransformerAblation::parse(const std::vector<std::string>& flags) {
  TransformerAblation a;
  for (std::string f : flags) {
    std::string lower = f;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "drop_position")
      a.drop_position = true;
    else if (lower == "drop_type")
      a.drop_type = true;
    else if (lower == "drop_segment")
      a.drop_segment = true;
    else if (lower == "drop_n1")
      a.drop_n1 = true;
    else if (lower == "drop_n2")
      a.drop_n2 = true;
    else
      throw std::invalid_argument("unknown transformer ablation flag '" + f + "'");
  }
  return a;
}

std::vector<std::string> TransformerAblation::flags() const {
  std::vector<std::string> out;
  if (drop_position) out.emplace_back("drop_position");
  if (drop_type) out.emplace_back("drop_type");
  if (drop_segment) out.emplace_back("drop_segment");
  if (drop_n1) out.emplace_back("drop_N1");
  if (drop_n2) out.emplace_back("drop_N2");
  return out;
}

TransformerLocalParams TransformerLocalParams::make(std::size_t dim,
                                                    const TransformerConfig& cfg,
                                                    std::mt19937_64& rng) {
  if (dim == 0) throw std::invalid_argument("transformer: dim must be >= 1");
  if (cfg.max_segments < 2)
    throw std::invalid_argument("transformer: need at least two segment embeddings");
  TransformerLocalParams p;
  p.config = cfg;
  p.dim = dim;
  p.b2 = glorot_param({dim, dim}, rng);
  p.type_embed = normal_param({2, dim}, 0.1, rng);
  p.segment_embed = normal_param({cfg.max_segments, dim}, 0.1, rng);
  p.position_embed = normal_param({cfg.max_positions, dim}, 0.1, rng);
  p.cls = normal_param({1, dim}, 0.1, rng);
  p.sep = normal_param({1, dim}, 0.1, rng);
  for (std::size_t i = 0; i < cfg.layers; ++i)
    p.encoder.push_back(
        EncoderLayer::make(dim, cfg.heads, cfg.head_dim, cfg.ffn_width, rng));
  p.f1 = Linear::make(dim, cfg.head_hidden, rng);
  p.f2 = Linear::make(cfg.head_hidden, dim, rng);
  p.f3 = Linear::make(2, cfg.head_hidden, rng);
  p.f4 = Linear::make(cfg.head_hidden, 1, rng);
  return p;
}

void TransformerLocalParams::register_params(ParamSet& ps,
                                             const std::string& prefix) const {
  ps.add(prefix + ".b2", b2);
  ps.add(prefix + ".type_embed", type_embed);
  ps.add(prefix + ".segment_embed", segment_embed);
  ps.add(prefix + ".position_embed", position_embed);
  ps.add(prefix + ".cls", cls);
  ps.add(prefix + ".sep", sep);
  for (std::size_t i = 0; i < encoder.size(); ++i)
    encoder[i].register_params(ps, prefix + ".encoder." + std::to_string(i));
  f1.register_params(ps, prefix + ".f1");
  f2.register_params(ps, prefix + ".f2");
  f3.register_params(ps, prefix + ".f3");
  f4.register_params(ps, prefix + ".f4");
}

namespace {

void warn_missing_surface(const std::string& entity_id) {
  static std::mutex mu;
  static std::unordered_set<std::string> seen;
  std::lock_guard<std::mutex> lock(mu);
  if (seen.insert(entity_id).second)
    logging::warn("entity '" + entity_id + "' has no surface form; using B2 projection only");
}

}  // namespace

Tensor candidate_token_embeddings(const Mention& mention, const EmbeddingStore& store,
                                  const TransformerLocalParams& params) {
  Tensor projected = matmul(candidate_matrix(mention, store), params.b2);
  const std::size_t d = store.dim();
  std::vector<Tensor> rows;
  rows.reserve(mention.candidates.size());
  for (std::size_t i = 0; i < mention.candidates.size(); ++i) {
    const std::string& eid = mention.candidates[i].entity_id;
    const std::size_t idx[] = {i};
    Tensor proj_row = select_rows(projected, idx);
    const auto* surface = store.entity_surface(eid);
    if (surface == nullptr || surface->empty()) {
      warn_missing_surface(eid);
      rows.push_back(proj_row);
      continue;
    }
    std::vector<double> mean(d, 0.0);
    for (const std::string& w : *surface) {
      const auto v = store.word(w);
      for (std::size_t j = 0; j < d; ++j) mean[j] += v[j];
    }
    for (double& x : mean) x /= static_cast<double>(surface->size());
    rows.push_back(scale(add(Tensor::row(std::move(mean)), proj_row), 0.5));
  }
  return stack_rows(rows);
}

TransformerInput build_input(const Mention& mention, const EmbeddingStore& store,
                             const TransformerLocalParams& params) {
  const std::size_t n = mention.candidates.size();
  if (n == 0) throw std::invalid_argument("mention '" + mention.id + "' has no candidates");
  const auto& cfg = params.config;
  if (n + 1 > cfg.max_segments)
    throw std::invalid_argument("transformer: " + std::to_string(n) +
                                " candidates exceed the segment table");

  std::vector<std::string> context(mention.context_window.begin(),
                                   mention.context_window.begin() +
                                       static_cast<std::ptrdiff_t>(mention.left_context));
  context.insert(context.end(), mention.surface.begin(), mention.surface.end());
  context.insert(context.end(),
                 mention.context_window.begin() +
                     static_cast<std::ptrdiff_t>(mention.left_context),
                 mention.context_window.end());

  const std::size_t seq_len = 1 + context.size() + 1 + 2 * n;
  if (seq_len > cfg.max_positions)
    throw std::invalid_argument("transformer: sequence of length " +
                                std::to_string(seq_len) + " exceeds max_positions " +
                                std::to_string(cfg.max_positions));

  TransformerInput in;
  in.mention_row = 1 + mention.left_context;
  Tensor cand_tokens = candidate_token_embeddings(mention, store, params);

  std::vector<Tensor> tokens;
  tokens.reserve(seq_len);
  auto push = [&](Tensor tok, std::size_t type, std::size_t segment, std::size_t pos) {
    tokens.push_back(std::move(tok));
    in.types.push_back(type);
    in.segments.push_back(segment);
    in.positions.push_back(pos);
  };
  push(params.cls, 0, 0, 0);
  for (const std::string& w : context) {
    const auto v = store.word(w);
    push(Tensor::row(std::vector<double>(v.begin(), v.end())), 0, 0, tokens.size());
  }
  // [SEP] rows take the type and segment of the block that follows them; the
  // closing [SEP] takes those of the last candidate.
  in.sep_rows.push_back(tokens.size());
  push(params.sep, 1, 1, tokens.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t idx[] = {i};
    in.candidate_rows.push_back(tokens.size());
    push(select_rows(cand_tokens, idx), 1, i + 1, in.mention_row);
    in.sep_rows.push_back(tokens.size());
    push(params.sep, 1, std::min(i + 2, n), tokens.size());
  }

  Tensor sum_rows = stack_rows(tokens);
  const auto& ab = params.ablation;
  if (!ab.drop_type) sum_rows = add(sum_rows, select_rows(params.type_embed, in.types));
  if (!ab.drop_segment)
    sum_rows = add(sum_rows, select_rows(params.segment_embed, in.segments));
  if (!ab.drop_position)
    sum_rows = add(sum_rows, select_rows(params.position_embed, in.positions));
  in.rows = sum_rows;
  return in;
}

TransformerScores transformer_forward(const Mention& mention, const EmbeddingStore& store,
                                      const TransformerLocalParams& params,
                                      const ForwardContext& ctx) {
  TransformerInput in = build_input(mention, store, params);
  Tensor h = in.rows;
  for (const EncoderLayer& layer : params.encoder) h = layer(h, ctx);

  const std::size_t cls_row[] = {0};
  const std::size_t m_row[] = {in.mention_row};
  Tensor o_cls = select_rows(h, cls_row);
  Tensor o_m = select_rows(h, m_row);
  Tensor entities_t = transpose(candidate_matrix(mention, store));  // d x n
  const std::size_t n = mention.candidates.size();

  TransformerScores out;
  out.encoded = h;
  Tensor query = params.f2(ctx.drop(relu(params.f1(o_cls))));
  out.n1 = params.ablation.drop_n1 ? Tensor::zeros({1, n})
                                   : softmax(matmul(query, entities_t));
  out.n2 = params.ablation.drop_n2 ? Tensor::zeros({1, n}) : matmul(o_m, entities_t);

  Tensor pairs = transpose(stack_rows(std::vector<Tensor>{out.n1, out.n2}));  // n x 2
  Tensor logits = params.f4(ctx.drop(relu(params.f3(pairs))));                // n x 1
  out.n3 = softmax(transpose(logits));
  return out;
}

Tensor local_scores_transformer(const Mention& mention, const EmbeddingStore& store,
                                const TransformerLocalParams& params,
                                const ForwardContext& ctx) {
  return transformer_forward(mention, store, params, ctx).n3;
}

}  // namespace dymen
