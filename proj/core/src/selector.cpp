#include "dymen/selector.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "dymen/local_attn.hpp"

namespace dymen {

namespace {

constexpr std::array<const char*, kFeatureCount> kFeatureNames{
    "coherence", "prior", "type", "neighborhood", "local"};

Tensor entity_rows(std::span<const std::string> ids, const EmbeddingStore& store) {
  const std::size_t d = store.dim();
  std::vector<double> v;
  v.reserve(ids.size() * d);
  for (const std::string& id : ids) {
    const auto e = store.entity(id);
    v.insert(v.end(), e.begin(), e.end());
  }
  return Tensor::constant({ids.size(), d}, std::move(v));
}

Tensor bilinear_rows(const Tensor& candidates, const Tensor& diag, const Tensor& feature) {
  return transpose(matmul(scale_cols(candidates, diag), transpose(feature)));
}

}  // namespace

std::size_t FeatureMask::count() const {
  return static_cast<std::size_t>(std::count(enabled.begin(), enabled.end(), true));
}

FeatureMask FeatureMask::parse(const std::string& spec) {
  FeatureMask m;
  if (spec.empty() || spec == "all") return m;
  if (spec == "w/o T-K" || spec == "wo-tk" || spec == "w/o-T-K") {
    m.enabled[static_cast<std::size_t>(Feature::type)] = false;
    m.enabled[static_cast<std::size_t>(Feature::neighborhood)] = false;
    return m;
  }
  m.enabled.fill(false);
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    auto it = std::find_if(kFeatureNames.begin(), kFeatureNames.end(),
                           [&](const char* n) { return tok == n; });
    if (it == kFeatureNames.end())
      throw std::invalid_argument("unknown selector feature '" + tok + "'");
    m.enabled[static_cast<std::size_t>(it - kFeatureNames.begin())] = true;
  }
  if (m.count() == 0) throw std::invalid_argument("selector feature mask is empty");
  return m;
}

std::string FeatureMask::to_string() const {
  if (count() == kFeatureCount) return "all";
  std::string out;
  for (std::size_t i = 0; i < kFeatureCount; ++i)
    if (enabled[i]) out += (out.empty() ? "" : ",") + std::string(kFeatureNames[i]);
  return out;
}

SelectorParams SelectorParams::make(std::size_t dim, std::size_t top_k, FeatureMask mask,
                                    std::size_t fusion_hidden, bool z_normalize,
                                    std::mt19937_64& rng) {
  if (top_k == 0) throw std::invalid_argument("selector: top_k must be >= 1");
  if (mask.count() == 0) throw std::invalid_argument("selector: no features enabled");
  SelectorParams p;
  p.b5 = ones_param({1, dim});
  p.b6 = ones_param({1, dim});
  p.top_k = top_k;
  p.mask = mask;
  p.z_normalize = z_normalize;
  p.fusion = fusion_hidden == 0 ? FeedForward::make({mask.count(), 1}, rng)
                                : FeedForward::make({mask.count(), fusion_hidden, 1}, rng);
  return p;
}

void SelectorParams::register_params(ParamSet& ps, const std::string& prefix) const {
  ps.add(prefix + ".b5", b5);
  ps.add(prefix + ".b6", b6);
  fusion.register_params(ps, prefix + ".fusion");
}

Tensor linked_context_feature(const Tensor& candidates, const Tensor& linked,
                              const Tensor& diag, std::size_t top_k) {
  if (!linked.defined() || linked.rows() == 0) return Tensor::zeros({1, candidates.cols()});
  Tensor scores = col_max(matmul(scale_cols(candidates, diag), transpose(linked)));
  const auto keep = top_k_indices(scores.values(), top_k);
  Tensor weights = softmax(select_cols(scores, keep));
  return matmul(weights, select_rows(linked, keep));
}

Tensor coherence_score(const Tensor& candidate, const Tensor& feature,
                       const SelectorParams& params) {
  return bilinear(candidate, params.b5, feature);
}

std::vector<std::string> neighborhood(std::span<const std::string> linked,
                                      const EmbeddingStore& store) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const std::string& e : linked)
    for (const std::string& nb : store.neighbors(e))
      if (seen.insert(nb).second) out.push_back(nb);
  return out;
}

Tensor neighborhood_scores(const Tensor& candidates, std::span<const std::string> linked,
                           const EmbeddingStore& store, const SelectorParams& params) {
  const auto nbrs = neighborhood(linked, store);
  if (nbrs.empty()) return Tensor::zeros({1, candidates.rows()});
  Tensor f = linked_context_feature(candidates, entity_rows(nbrs, store), params.b6,
                                    params.top_k);
  return bilinear_rows(candidates, params.b6, f);
}

Tensor type_scores(const Mention& mention, const EmbeddingStore& store) {
  std::vector<double> v(mention.candidates.size(), 0.0);
  const auto mt = store.mention_type(mention.id);
  if (mt) {
    for (std::size_t i = 0; i < mention.candidates.size(); ++i) {
      const auto et = store.entity_type(mention.candidates[i].entity_id);
      if (!et) continue;
      if (et->size() != mt->size())
        throw std::invalid_argument("type vector size mismatch for mention '" +
                                    mention.id + "'");
      double s = 0.0;
      for (std::size_t j = 0; j < mt->size(); ++j) s += (*mt)[j] * (*et)[j];
      v[i] = s;
    }
  }
  return Tensor::row(std::move(v));
}

SelectorOutput candidate_distribution(const Mention& mention,
                                      std::span<const std::string> linked,
                                      const EmbeddingStore& store,
                                      const SelectorParams& params, const Tensor& psi,
                                      const ForwardContext& ctx) {
  const std::size_t n = mention.candidates.size();
  if (psi.rows() != 1 || psi.cols() != n)
    throw std::invalid_argument("candidate_distribution: local scores must be 1 x " +
                                std::to_string(n));
  Tensor cands = candidate_matrix(mention, store);
  std::vector<Tensor> cols;
  const FeatureMask& mask = params.mask;
  if (mask.has(Feature::coherence)) {
    Tensor linked_rows = linked.empty() ? Tensor() : entity_rows(linked, store);
    Tensor f = linked_context_feature(cands, linked_rows, params.b5, params.top_k);
    cols.push_back(bilinear_rows(cands, params.b5, f));
  }
  if (mask.has(Feature::prior)) {
    std::vector<double> pr(n);
    for (std::size_t i = 0; i < n; ++i) pr[i] = mention.candidates[i].prior;
    cols.push_back(Tensor::row(std::move(pr)));
  }
  if (mask.has(Feature::type)) cols.push_back(type_scores(mention, store));
  if (mask.has(Feature::neighborhood))
    cols.push_back(neighborhood_scores(cands, linked, store, params));
  if (mask.has(Feature::local)) cols.push_back(psi);

  SelectorOutput out;
  out.features = transpose(stack_rows(cols));  // n x k
  Tensor x = params.z_normalize && n > 1 ? zscore_cols(out.features) : out.features;
  out.probs = softmax(transpose(params.fusion(x, ctx)));
  return out;
}

}  // namespace dymen
