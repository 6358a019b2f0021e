#pragma once

// Delayed episode rewards computed from per-step correctness flags.
// Step indices are 1-based; every reward at step t carries the factor
// gamma^(L - t) / L.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dymen {

struct EpisodeOutcome {
  std::vector<bool> flags;  // selection order; true = linked to gold
  double gamma = 0.9;

  std::size_t length() const { return flags.size(); }
};

struct TransitionRewards {
  double tt = 0.0;
  double tf = -2.0;
  double ff = -1.0;
  double ft = 0.0;
};

enum class RewardKind { r1, r2_fixed, r2_prob, r3 };

RewardKind parse_reward_kind(const std::string& name);  // R1, R2-1, R2-2, R3
std::string to_string(RewardKind kind);

/// Parses a string of '0'/'1' characters.
std::vector<bool> parse_flags(const std::string& s);

/// 1-based index of the first incorrect step, or L + 1 when all are correct.
std::size_t first_error_index(const std::vector<bool>& flags);

double discount(const EpisodeOutcome& o, std::size_t t);

/// (gamma^(L-t) / L) * (-L + I_first_error).
double reward_r1(const EpisodeOutcome& o, std::size_t t);

/// (gamma^(L-t) / L) * sum over tau = 1..L of lambda(flag_{tau-1}, flag_tau),
/// with flag_0 = true. With step_probs (the predicted probability of the
/// linked entity at each step), the TF and FF terms become -L * p at the
/// failing step instead of lambda.tf / lambda.ff.
double reward_r2(const EpisodeOutcome& o, std::size_t t, const TransitionRewards& lambda,
                 std::optional<std::span<const double>> step_probs = std::nullopt);

/// (gamma^(L-t) / L) * sum over incorrect steps d of (-1 + (I_d - L) / L).
double reward_r3(const EpisodeOutcome& o, std::size_t t);

/// Dispatches on kind; step_probs is required for RewardKind::r2_prob.
double reward(RewardKind kind, const EpisodeOutcome& o, std::size_t t,
              const TransitionRewards& lambda = {},
              std::optional<std::span<const double>> step_probs = std::nullopt);

/// The bracketed sum alone, i.e. L * R(L): the values quoted for worked
/// examples ("R1(T) = -3").
double reward_base(RewardKind kind, const EpisodeOutcome& o,
                   const TransitionRewards& lambda = {},
                   std::optional<std::span<const double>> step_probs = std::nullopt);

/// R(t) for t = 1..L.
std::vector<double> reward_trace(RewardKind kind, const EpisodeOutcome& o,
                                 const TransitionRewards& lambda = {},
                                 std::optional<std::span<const double>> step_probs =
                                     std::nullopt);

/// Counts of (TT, TF, FF, FT) transitions including the initial one.
struct TransitionCounts {
  std::size_t tt = 0, tf = 0, ff = 0, ft = 0;
};
TransitionCounts count_transitions(const std::vector<bool>& flags);

}  // namespace dymen
