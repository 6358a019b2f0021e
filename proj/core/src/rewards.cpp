#include "dymen/rewards.hpp"

#include <cmath>
#include <stdexcept>

namespace dymen {

RewardKind parse_reward_kind(const std::string& name) {
  if (name == "R1" || name == "r1") return RewardKind::r1;
  if (name == "R2-1" || name == "r2-1") return RewardKind::r2_fixed;
  if (name == "R2-2" || name == "r2-2") return RewardKind::r2_prob;
  if (name == "R3" || name == "r3") return RewardKind::r3;
  throw std::invalid_argument("unknown reward '" + name + "' (expected R1, R2-1, R2-2, R3)");
}

std::string to_string(RewardKind kind) {
  switch (kind) {
    case RewardKind::r1: return "R1";
    case RewardKind::r2_fixed: return "R2-1";
    case RewardKind::r2_prob: return "R2-2";
    case RewardKind::r3: return "R3";
  }
  return "?";
}

std::vector<bool> parse_flags(const std::string& s) {
  std::vector<bool> flags;
  for (char c : s) {
    if (c == '1')
      flags.push_back(true);
    else if (c == '0')
      flags.push_back(false);
    else
      throw std::invalid_argument("flag string may only contain '0' and '1': " + s);
  }
  return flags;
}

std::size_t first_error_index(const std::vector<bool>& flags) {
  for (std::size_t i = 0; i < flags.size(); ++i)
    if (!flags[i]) return i + 1;
  return flags.size() + 1;
}

namespace {

void check(const EpisodeOutcome& o, std::size_t t) {
  if (o.flags.empty()) throw std::invalid_argument("reward: empty episode");
  if (t < 1 || t > o.flags.size())
    throw std::invalid_argument("reward: step " + std::to_string(t) + " outside 1.." +
                                std::to_string(o.flags.size()));
  if (!(o.gamma > 0.0 && o.gamma <= 1.0))
    throw std::invalid_argument("reward: gamma must be in (0, 1]");
}

}  // namespace

double discount(const EpisodeOutcome& o, std::size_t t) {
  check(o, t);
  const double L = static_cast<double>(o.flags.size());
  return std::pow(o.gamma, static_cast<double>(o.flags.size() - t)) / L;
}

namespace {

double r1_base(const EpisodeOutcome& o) {
  const double L = static_cast<double>(o.flags.size());
  return -L + static_cast<double>(first_error_index(o.flags));
}

double r2_base(const EpisodeOutcome& o, const TransitionRewards& lambda,
               std::optional<std::span<const double>> step_probs) {
  const double L = static_cast<double>(o.flags.size());
  if (step_probs && step_probs->size() != o.flags.size())
    throw std::invalid_argument("reward_r2: need one probability per step");
  double total = 0.0;
  bool prev = true;
  for (std::size_t i = 0; i < o.flags.size(); ++i) {
    const bool cur = o.flags[i];
    if (prev && cur) {
      total += lambda.tt;
    } else if (!prev && cur) {
      total += lambda.ft;
    } else {
      const double fixed = prev ? lambda.tf : lambda.ff;
      total += step_probs ? -L * (*step_probs)[i] : fixed;
    }
    prev = cur;
  }
  return total;
}

double r3_base(const EpisodeOutcome& o) {
  const double L = static_cast<double>(o.flags.size());
  double total = 0.0;
  for (std::size_t i = 0; i < o.flags.size(); ++i)
    if (!o.flags[i]) total += -1.0 + (static_cast<double>(i + 1) - L) / L;
  return total;
}

}  // namespace

double reward_r1(const EpisodeOutcome& o, std::size_t t) {
  return discount(o, t) * r1_base(o);
}

TransitionCounts count_transitions(const std::vector<bool>& flags) {
  TransitionCounts c;
  bool prev = true;
  for (bool f : flags) {
    if (prev && f) ++c.tt;
    else if (prev && !f) ++c.tf;
    else if (!prev && !f) ++c.ff;
    else ++c.ft;
    prev = f;
  }
  return c;
}

double reward_r2(const EpisodeOutcome& o, std::size_t t, const TransitionRewards& lambda,
                 std::optional<std::span<const double>> step_probs) {
  const double scale = discount(o, t);
  return scale * r2_base(o, lambda, step_probs);
}

double reward_r3(const EpisodeOutcome& o, std::size_t t) {
  return discount(o, t) * r3_base(o);
}

double reward_base(RewardKind kind, const EpisodeOutcome& o,
                   const TransitionRewards& lambda,
                   std::optional<std::span<const double>> step_probs) {
  check(o, o.flags.size());
  switch (kind) {
    case RewardKind::r1: return r1_base(o);
    case RewardKind::r2_fixed: return r2_base(o, lambda, std::nullopt);
    case RewardKind::r2_prob:
      if (!step_probs)
        throw std::invalid_argument("R2-2 needs the per-step linked-entity probabilities");
      return r2_base(o, lambda, step_probs);
    case RewardKind::r3: return r3_base(o);
  }
  throw std::logic_error("unreachable reward kind");
}

double reward(RewardKind kind, const EpisodeOutcome& o, std::size_t t,
              const TransitionRewards& lambda,
              std::optional<std::span<const double>> step_probs) {
  switch (kind) {
    case RewardKind::r1: return reward_r1(o, t);
    case RewardKind::r2_fixed: return reward_r2(o, t, lambda);
    case RewardKind::r2_prob:
      if (!step_probs)
        throw std::invalid_argument("R2-2 needs the per-step linked-entity probabilities");
      return reward_r2(o, t, lambda, step_probs);
    case RewardKind::r3: return reward_r3(o, t);
  }
  throw std::logic_error("unreachable reward kind");
}

std::vector<double> reward_trace(RewardKind kind, const EpisodeOutcome& o,
                                 const TransitionRewards& lambda,
                                 std::optional<std::span<const double>> step_probs) {
  std::vector<double> r(o.flags.size());
  for (std::size_t t = 1; t <= o.flags.size(); ++t)
    r[t - 1] = reward(kind, o, t, lambda, step_probs);
  return r;
}

}  // namespace dymen
