#include "dymen/policy.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace dymen {

PolicyParams PolicyParams::make(std::size_t dim, std::size_t top_k) {
  if (top_k == 0) throw std::invalid_argument("policy: top_k must be >= 1");
  return PolicyParams{ones_param({1, 2 * dim}), ones_param({1, 2 * dim}),
                      zeros_param({1, 2 * dim}), top_k};
}

void PolicyParams::register_params(ParamSet& ps, const std::string& prefix) const {
  ps.add(prefix + ".b3", b3);
  ps.add(prefix + ".b4", b4);
  ps.add(prefix + ".initial_pair", initial_pair);
}

LinkingState LinkingState::initial(const PolicyParams& params) {
  return LinkingState{{params.initial_pair}};
}

Tensor LinkingState::matrix() const { return stack_rows(history); }

ActionWindow ActionWindow::over(std::size_t mention_count, std::size_t width) {
  if (width == 0) throw std::invalid_argument("action window width must be >= 1");
  ActionWindow w;
  w.width = width;
  w.unresolved.resize(mention_count);
  std::iota(w.unresolved.begin(), w.unresolved.end(), 0);
  return w;
}

std::span<const std::size_t> ActionWindow::actions() const {
  return std::span<const std::size_t>(unresolved).first(
      std::min(width, unresolved.size()));
}

bool ActionWindow::contains(std::size_t mention) const {
  const auto a = actions();
  return std::find(a.begin(), a.end(), mention) != a.end();
}

Tensor action_representation(const Tensor& mention_repr, const Tensor& psi,
                             const Tensor& candidates) {
  if (psi.cols() != candidates.rows())
    throw std::invalid_argument("action_representation: " + std::to_string(psi.cols()) +
                                " scores for " + std::to_string(candidates.rows()) +
                                " candidates");
  Tensor mention_half = scale_by(mention_repr, sum(psi));
  Tensor entity_half = matmul(psi, candidates);
  return concat_cols(mention_half, entity_half);
}

Tensor state_relevance(const Tensor& history, const Tensor& actions,
                       const PolicyParams& params) {
  if (history.rows() == 0) throw std::invalid_argument("state_relevance: empty history");
  if (actions.rows() == 0) throw std::invalid_argument("state_relevance: no actions");
  return col_max(matmul(scale_cols(actions, params.b3), transpose(history)));
}

ActionChoice select_action(const LinkingState& state, const Tensor& actions,
                           const PolicyParams& params, SelectMode mode,
                           std::mt19937_64* rng) {
  if (actions.rows() == 0)
    throw std::invalid_argument("select_action: empty action set");
  Tensor history = state.matrix();
  Tensor relevance = state_relevance(history, actions, params);

  ActionChoice out;
  out.evidence = top_k_indices(relevance.values(), params.top_k);
  Tensor weights = softmax(select_cols(relevance, out.evidence));    // 1 x k
  Tensor evidence = select_rows(history, out.evidence);              // k x 2d
  Tensor per_evidence = matmul(scale_cols(actions, params.b4), transpose(evidence));
  Tensor logits = transpose(matmul(per_evidence, transpose(weights)));  // 1 x |A|
  Tensor log_dist = log_softmax(logits);
  out.distribution = softmax(logits);

  const auto probs = out.distribution.values();
  if (mode == SelectMode::greedy) {
    out.index = static_cast<std::size_t>(
        std::max_element(probs.begin(), probs.end()) - probs.begin());
  } else {
    if (rng == nullptr) throw std::invalid_argument("select_action: sampling needs an rng");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double r = u(*rng);
    double acc = 0.0;
    out.index = probs.size() - 1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (r < acc) {
        out.index = i;
        break;
      }
    }
  }
  out.log_prob = element(log_dist, 0, out.index);
  return out;
}

void advance(LinkingState& state, ActionWindow& window, std::size_t mention,
             const Tensor& mention_repr, const Tensor& entity_vec) {
  if (!window.contains(mention))
    throw std::invalid_argument("advance: mention " + std::to_string(mention) +
                                " is not in the current action window");
  state.history.push_back(concat_cols(mention_repr, entity_vec));
  window.unresolved.erase(
      std::find(window.unresolved.begin(), window.unresolved.end(), mention));
}

}  // namespace dymen
