#pragma once

// Joint training of the mention-selection policy (REINFORCE) and the entity
// selector (margin ranking loss), with teacher-forced history.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dymen/corpus.hpp"
#include "dymen/local_attn.hpp"
#include "dymen/local_transformer.hpp"
#include "dymen/nn.hpp"
#include "dymen/policy.hpp"
#include "dymen/rewards.hpp"
#include "dymen/selector.hpp"

namespace dymen {

enum class LocalModelKind { attn, transformer };

LocalModelKind parse_local_model(const std::string& name);
std::string to_string(LocalModelKind kind);

/// Every knob of a training run. Defaults are desk-scale; paper_profile()
/// returns the published settings.
struct TrainConfig {
  double gamma = 0.9;
  double gamma1 = 1e-4;  // weight of the policy-gradient term
  double beta = 0.01;    // margin
  double lr = 5e-3;
  double lr_after = 2.5e-3;           // used once validation accuracy passes the threshold
  double lr_drop_threshold = 0.9;
  std::size_t epochs = 15;
  std::size_t window = 4;             // 0 means unrestricted (W = L)
  std::size_t top_k = 7;              // policy evidence count
  std::size_t selector_top_k = 7;
  RewardKind reward = RewardKind::r3;
  TransitionRewards lambda;
  std::uint64_t seed = 1;

  LocalModelKind local_model = LocalModelKind::attn;
  std::size_t top_r = 25;
  TransformerConfig transformer{1, 2, 8, 32, 16, 64, 33, 0.0};
  std::vector<std::string> ablations;

  FeatureMask features;
  std::size_t fusion_hidden = 8;  // 0 = linear fusion
  bool z_normalize = false;
  double dropout = 0.0;

  double validation_fraction = 0.2;
  std::size_t threads = 1;
  bool check_teacher_forcing = true;

  static TrainConfig paper_profile();
  void validate() const;
  std::size_t window_for(std::size_t mention_count) const;
};

/// key = value lines, '#' starts a comment. Keys match the field names;
/// transformer settings use a "transformer." prefix, lambda is four comma
/// separated numbers (TT,TF,FF,FT), window accepts "L".
TrainConfig parse_config(const std::string& text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path);
/// Canonical text form; parse_config(to_config_string(c)) == c.
std::string to_config_string(const TrainConfig& c);
/// FNV-1a of the canonical text.
std::uint64_t config_hash(const TrainConfig& c);

/// All trainable modules plus a flat registry of their tensors.
struct Model {
  std::size_t dim = 0;
  LocalModelKind local_model = LocalModelKind::attn;
  LocalAttnParams attn;
  std::optional<TransformerLocalParams> transformer;
  PolicyParams policy;
  SelectorParams selector;
  ParamSet params;

  static Model make(const TrainConfig& cfg, std::size_t dim);
};

/// Per-mention quantities that do not depend on the linking history.
struct MentionView {
  Tensor candidates;   // n x d entity vectors
  Tensor repr;         // 1 x d mention representation
  Tensor psi_policy;   // 1 x n, sums to 1
  Tensor psi_local;    // 1 x n, local feature handed to the selector
};

std::vector<MentionView> view_mentions(const Document& doc, const EmbeddingStore& store,
                                       const Model& model, const ForwardContext& ctx);

/// One selector decision given the entities linked so far.
struct LinkDecision {
  std::size_t predicted = 0;  // candidate index (argmax, first on ties)
  double probability = 0.0;
  bool correct = false;
  Tensor probs;  // 1 x n
};

LinkDecision link_mention(const Mention& mention, const MentionView& view,
                          std::span<const std::string> linked, const EmbeddingStore& store,
                          const Model& model, const ForwardContext& ctx);

struct Episode {
  std::string document_id;
  std::vector<std::size_t> order;  // mention indices in selection order
  std::vector<Tensor> log_probs;   // per step, 1 x 1
  std::vector<std::size_t> window_sizes;
  std::vector<std::size_t> predicted;  // candidate index per step
  std::vector<std::string> predicted_entity;
  std::vector<double> predicted_prob;
  std::vector<bool> flags;
  std::vector<double> rewards;      // R(t), t = 1..L
  std::vector<Tensor> probs;        // per step candidate distribution
  std::vector<std::string> linked;  // entities appended to the history, in order
  bool sampled = false;

  double accuracy() const;
};

struct RolloutOptions {
  Mode mode = Mode::eval;
  SelectMode select = SelectMode::greedy;
  std::mt19937_64* rng = nullptr;
  /// Replaces the policy's choices; the policy is still scored on them when
  /// score_forced is set (used for gradient checks).
  std::optional<std::vector<std::size_t>> forced_order;
  bool score_forced = false;
  /// Overrides the window width; 0 keeps the config value.
  std::size_t window = 0;
};

/// Raised when a training rollout puts a non-gold entity into the history.
class TeacherForcingViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Train mode appends the gold entity (teacher forcing) while the flag
/// records whether the selector's argmax was gold; eval mode appends the
/// prediction. Rewards are filled from the flags.
Episode rollout(const Document& doc, const EmbeddingStore& store, const Model& model,
                const TrainConfig& cfg, const RolloutOptions& opts);

/// Mean over episodes of sum_t R(t) log pi(a_t): its gradient is the
/// REINFORCE ascent direction. Throws for greedy or forced episodes.
Tensor reinforce_objective(std::span<const Episode> episodes);

/// Sum over mentions and candidates of max(0, beta - P(gold) + P(e)),
/// including the constant e = gold term. Mentions without their gold among
/// the candidates are skipped.
Tensor margin_loss(const Document& doc, const Episode& ep, double beta);

/// Hinge sum for one distribution; exposed for tests.
Tensor margin_terms(const Tensor& probs, std::size_t gold, double beta);

struct EpochLog {
  std::size_t epoch = 0;
  double margin_loss = 0.0;
  double policy_objective = 0.0;  // mean |J| bookkeeping
  double train_accuracy = 0.0;    // flag rate during training rollouts
  double validation_accuracy = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double best_validation = -1.0;
  std::size_t best_epoch = 0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Greedy eval accuracy (mentions correct / total) with the policy ordering.
double evaluate_accuracy(std::span<const Document> docs, const EmbeddingStore& store,
                         const Model& model, const TrainConfig& cfg);

/// Full loop. The model ends holding the best-validation parameters. When
/// diagnostic_dir is set, a divergence writes a checkpoint there first.
TrainResult train(std::span<const Document> train_docs,
                  std::span<const Document> validation_docs, const EmbeddingStore& store,
                  const TrainConfig& cfg, Model& model,
                  const std::optional<std::filesystem::path>& diagnostic_dir = std::nullopt,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

/// Text checkpoint:
///   dymen-checkpoint 1
///   <tensor count>
///   then per tensor "<name> <rows> <cols>" and one line of values (%.17g).
void save_checkpoint(const std::filesystem::path& path, const ParamSet& params);
void load_checkpoint(const std::filesystem::path& path, ParamSet& params);

}  // namespace dymen
