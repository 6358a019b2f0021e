#pragma once

// Dynamic mention selection: the linking state, the sliding action window,
// and the attention policy over window actions.

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "dymen/nn.hpp"
#include "dymen/tensor.hpp"

namespace dymen {

struct PolicyParams {
  Tensor b3;            // 1 x 2d, relevance of history elements to actions
  Tensor b4;            // 1 x 2d, action logits
  Tensor initial_pair;  // 1 x 2d, the [m_0; e_0] state element
  std::size_t top_k = 7;

  static PolicyParams make(std::size_t dim, std::size_t top_k = 7);
  void register_params(ParamSet& ps, const std::string& prefix) const;
};

/// Ordered history of [mention; entity] pairs, starting with the initial pair.
struct LinkingState {
  std::vector<Tensor> history;  // each 1 x 2d

  static LinkingState initial(const PolicyParams& params);
  std::size_t step() const { return history.size() - 1; }
  Tensor matrix() const;  // (t+1) x 2d
};

/// Unlinked mentions in document order; the action set is the first
/// min(width, |unresolved|) of them.
struct ActionWindow {
  std::size_t width = 1;
  std::vector<std::size_t> unresolved;

  static ActionWindow over(std::size_t mention_count, std::size_t width);
  std::span<const std::size_t> actions() const;
  bool empty() const { return unresolved.empty(); }
  bool contains(std::size_t mention) const;
};

/// D = sum_j psi_j [mention; e_j]: 1 x 2d. psi is 1 x n, candidates n x d.
Tensor action_representation(const Tensor& mention_repr, const Tensor& psi,
                             const Tensor& candidates);

/// c(s_i) = max over actions of D_a^T diag(b3) s_i for every history element;
/// actions is |A| x 2d. Returns 1 x (t+1).
Tensor state_relevance(const Tensor& history, const Tensor& actions,
                       const PolicyParams& params);

enum class SelectMode { sample, greedy };

struct ActionChoice {
  std::size_t index = 0;  // position within the action set
  Tensor log_prob;        // 1 x 1, differentiable
  Tensor distribution;    // 1 x |A|
  std::vector<std::size_t> evidence;  // history rows used as evidence
};

/// Top-K history elements by relevance, softmax attention over them, and a
/// softmax over actions of sum_j w_j D_a^T diag(b4) s_j.
ActionChoice select_action(const LinkingState& state, const Tensor& actions,
                           const PolicyParams& params, SelectMode mode,
                           std::mt19937_64* rng);

/// Appends [mention; entity] and removes the mention from the window.
void advance(LinkingState& state, ActionWindow& window, std::size_t mention,
             const Tensor& mention_repr, const Tensor& entity_vec);

}  // namespace dymen
