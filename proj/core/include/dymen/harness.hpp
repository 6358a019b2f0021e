#pragma once

// Evaluation: micro-F1, fixed-order baselines, exhaustive ordering search,
// hyper-parameter sweeps and gradient checking.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dymen/corpus.hpp"
#include "dymen/trainer.hpp"

namespace dymen {

/// Every mention receives exactly one prediction, so micro-F1 equals
/// micro-accuracy (correct / total). Throws on empty or misaligned input.
double micro_f1(std::span<const std::string> predictions, std::span<const std::string> golds);

enum class OrderKind { offset, size, random, similarity, dynamic, forced, exhaustive_best };

struct OrderingStrategy {
  OrderKind kind = OrderKind::dynamic;
  std::uint64_t seed = 0;  // random ordering
  /// forced: document id -> mention order (a permutation).
  std::map<std::string, std::vector<std::size_t>> forced;
  /// Window for dynamic and exhaustive-best; 0 takes the config value.
  std::size_t window = 0;

  /// offset, size, random, similarity, dynamic, exhaustive-best, forced:<file>
  /// (file lines "<doc id> <i> <j> ...").
  static OrderingStrategy parse(const std::string& spec);
  std::string name() const;
};

/// Mention order for one document under a fixed strategy (not dynamic or
/// exhaustive-best, which need the model).
std::vector<std::size_t> fixed_order(const Document& doc, const EmbeddingStore& store,
                                     const Model& model, const OrderingStrategy& strategy,
                                     std::size_t doc_index);

/// Window-feasible orderings, each a permutation; throws when L > 9.
std::vector<std::vector<std::size_t>> window_orderings(std::size_t L, std::size_t W);

/// Best document accuracy over every window-feasible order (eval mode,
/// predicted history). Returns the first best order in lexicographic order.
std::vector<std::size_t> exhaustive_best_order(const Document& doc, const EmbeddingStore& store,
                                               const Model& model, std::size_t window);

struct DocumentResult {
  std::string id;
  std::vector<std::size_t> order;
  std::vector<bool> flags;                 // selection order
  std::vector<std::string> predictions;    // document order
  std::vector<double> probabilities;       // selection order
  double accuracy = 0.0;
};

struct EvalReport {
  std::string strategy;
  double micro_f1 = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  double mean_displacement = 0.0;  // mean |step - document position|
  std::vector<DocumentResult> documents;
  std::string config;  // canonical config text
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;

  std::string to_json() const;
};

EvalReport run_baseline(std::span<const Document> docs, const EmbeddingStore& store,
                        const Model& model, const TrainConfig& cfg,
                        const OrderingStrategy& strategy);

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepAxis { window, gamma1, reward };
SweepAxis parse_sweep_axis(const std::string& name);
std::string to_string(SweepAxis axis);

/// The published grids: W in {2..7, L}, gamma1 in five values, and the four
/// reward variants.
std::vector<std::string> default_grid(SweepAxis axis);

struct SweepCell {
  std::string axis;
  std::string value;
  std::uint64_t seed = 0;
  double micro_f1 = 0.0;
  double best_validation = 0.0;
  std::uint64_t config_hash = 0;

  bool operator==(const SweepCell&) const = default;
};

struct SweepSummary {
  std::string value;
  double mean = 0.0;
  double stdev = 0.0;  // sample standard deviation, 0 for one seed
  std::size_t runs = 0;
};

/// One trained run per grid value and seed, evaluated greedily on test_docs.
std::vector<SweepCell> sweep(std::span<const Document> train_docs,
                             std::span<const Document> validation_docs,
                             std::span<const Document> test_docs, const EmbeddingStore& store,
                             const TrainConfig& base, SweepAxis axis,
                             const std::vector<std::string>& grid,
                             const std::vector<std::uint64_t>& seeds);

std::vector<SweepSummary> summarize(const std::vector<SweepCell>& cells);

/// Columns: axis,value,seed,micro_f1,best_validation,config_hash
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepCell>& cells);
std::vector<SweepCell> load_sweep_csv(const std::filesystem::path& path);
/// Columns: value,mean,stdev,runs
void write_summary_csv(const std::filesystem::path& path,
                       const std::vector<SweepSummary>& rows);

/// Applies one grid value to a config.
TrainConfig with_axis_value(TrainConfig cfg, SweepAxis axis, const std::string& value);

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // kinks: one-sided differences disagree
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool passed = false;
};

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  std::size_t max_entries_per_tensor = 24;  // 0 = all
  double max_skip_fraction = 0.01;
  /// Gaussian noise added to every parameter first, so the check runs at a
  /// generic point rather than at structural ties of the initialization
  /// (the zero initial pair makes every action tie in the relevance max).
  double jitter = 0.1;
};

/// A small document with random (tie-free) embeddings.
Corpus random_instance(std::uint64_t seed, std::size_t dim, std::size_t mentions,
                       std::size_t candidates);

/// Central differences against the analytic gradient of
///   margin loss + sum_t c_t log pi(a_t)
/// for a fixed teacher-forced rollout with fixed coefficients c_t.
/// rel = |a - n| / max(|a|, |n|, 1e-6).
GradCheckReport grad_check(const Document& doc, const EmbeddingStore& store, Model& model,
                           const TrainConfig& cfg, std::uint64_t seed,
                           const GradCheckOptions& opts = {});

}  // namespace dymen
