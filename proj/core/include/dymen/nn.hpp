#pragma once

// Layers and optimization on top of the tensor substrate.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dymen/tensor.hpp"

namespace dymen {

enum class Mode { train, eval };

/// Per-forward settings: dropout is only applied in train mode.
struct ForwardContext {
  Mode mode = Mode::eval;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;

  Tensor drop(const Tensor& x) const;
};

/// Named, ordered view of trainable tensors. Tensors share storage with the
/// owning module, so updates through the set are visible everywhere.
class ParamSet {
 public:
  void add(std::string name, Tensor t);
  void extend(const std::string& prefix, const ParamSet& other);

  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
  const Tensor* find(const std::string& name) const;
  std::size_t scalar_count() const;

  void zero_grad();
  /// Snapshot of every parameter's values, in registration order.
  std::vector<std::vector<double>> values() const;
  void assign(const std::vector<std::vector<double>>& values);

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

Tensor ones_param(Shape shape);
Tensor zeros_param(Shape shape);
/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot_param(Shape shape, std::mt19937_64& rng);
/// Small gaussian init for embedding tables.
Tensor normal_param(Shape shape, double stddev, std::mt19937_64& rng);

enum class Activation { none, relu };

/// y = x W + b for a batch of rows.
struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out

  static Linear make(std::size_t in, std::size_t out, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x) const;
  std::size_t in_features() const { return weight.rows(); }
  std::size_t out_features() const { return weight.cols(); }
  void register_params(ParamSet& ps, const std::string& prefix) const;
};

/// Stack of linear layers with a per-layer activation; dropout follows every
/// activated layer.
struct FeedForward {
  std::vector<Linear> layers;
  std::vector<Activation> activations;

  /// widths = {in, h1, ..., out}; the last layer is linear, earlier layers use
  /// ReLU.
  static FeedForward make(const std::vector<std::size_t>& widths,
                          std::mt19937_64& rng);
  Tensor operator()(const Tensor& x, const ForwardContext& ctx) const;
  void register_params(ParamSet& ps, const std::string& prefix) const;
};

/// Post-norm Transformer encoder layer: multi-head scaled dot-product
/// self-attention and a position-wise feed-forward block, each wrapped in a
/// residual connection followed by layer normalization.
struct EncoderLayer {
  std::size_t heads = 1;
  std::size_t head_dim = 1;
  Tensor wq, wk, wv;  // d_model x heads*head_dim
  Tensor wo;          // heads*head_dim x d_model
  Tensor ln1_gain, ln1_bias;
  Linear ffn_in, ffn_out;
  Tensor ln2_gain, ln2_bias;

  static EncoderLayer make(std::size_t d_model, std::size_t heads,
                           std::size_t head_dim, std::size_t ffn_width,
                           std::mt19937_64& rng);
  Tensor operator()(const Tensor& seq, const ForwardContext& ctx) const;
  /// Attention weights (rows x rows) of one head, for inspection.
  Tensor attention_weights(const Tensor& seq, std::size_t head) const;
  void register_params(ParamSet& ps, const std::string& prefix) const;
};

/// Multi-head self-attention sublayer alone (no residual/norm).
Tensor multi_head_attention(const Tensor& seq, const EncoderLayer& layer);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(ParamSet params, AdamConfig cfg = {});
  /// One update using each parameter's accumulated gradient.
  void step(double lr);
  std::int64_t steps() const { return t_; }

 private:
  ParamSet params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace dymen
