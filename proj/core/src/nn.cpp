#include "dymen/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace dymen {

Tensor ForwardContext::drop(const Tensor& x) const {
  if (mode != Mode::train || dropout <= 0.0) return x;
  if (rng == nullptr) throw std::logic_error("dropout in train mode needs an rng");
  return dymen::dropout(x, dropout, *rng);
}

// ---------------------------------------------------------------- ParamSet

void ParamSet::add(std::string name, Tensor t) {
  if (!t.defined() || !t.requires_grad())
    throw std::invalid_argument("ParamSet::add: '" + name + "' is not a parameter");
  items_.emplace_back(std::move(name), std::move(t));
}

void ParamSet::extend(const std::string& prefix, const ParamSet& other) {
  for (const auto& [name, t] : other.items_) items_.emplace_back(prefix + name, t);
}

const Tensor* ParamSet::find(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return &t;
  return nullptr;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& item : items_) n += item.second.size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& item : items_) item.second.zero_grad();
}

std::vector<std::vector<double>> ParamSet::values() const {
  std::vector<std::vector<double>> out;
  out.reserve(items_.size());
  for (const auto& item : items_) out.push_back(item.second.to_vector());
  return out;
}

void ParamSet::assign(const std::vector<std::vector<double>>& values) {
  if (values.size() != items_.size())
    throw std::invalid_argument("ParamSet::assign: parameter count mismatch");
  for (std::size_t i = 0; i < items_.size(); ++i) {
    auto dst = items_[i].second.mutable_values();
    if (dst.size() != values[i].size())
      throw std::invalid_argument("ParamSet::assign: size mismatch for '" +
                                  items_[i].first + "'");
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

// ---------------------------------------------------------------- init

Tensor ones_param(Shape shape) {
  return Tensor::parameter(shape, std::vector<double>(shape.size(), 1.0));
}

Tensor zeros_param(Shape shape) {
  return Tensor::parameter(shape, std::vector<double>(shape.size(), 0.0));
}

Tensor glorot_param(Shape shape, std::mt19937_64& rng) {
  const double limit =
      std::sqrt(6.0 / static_cast<double>(shape.rows + shape.cols));
  std::uniform_real_distribution<double> u(-limit, limit);
  std::vector<double> v(shape.size());
  for (double& x : v) x = u(rng);
  return Tensor::parameter(shape, std::move(v));
}

Tensor normal_param(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  std::vector<double> v(shape.size());
  for (double& x : v) x = n(rng);
  return Tensor::parameter(shape, std::move(v));
}

// ---------------------------------------------------------------- Linear / FFN

Linear Linear::make(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  return Linear{glorot_param({in, out}, rng), zeros_param({1, out})};
}

Tensor Linear::operator()(const Tensor& x) const {
  return add_row(matmul(x, weight), bias);
}

void Linear::register_params(ParamSet& ps, const std::string& prefix) const {
  ps.add(prefix + ".weight", weight);
  ps.add(prefix + ".bias", bias);
}

FeedForward FeedForward::make(const std::vector<std::size_t>& widths,
                              std::mt19937_64& rng) {
  if (widths.size() < 2)
    throw std::invalid_argument("FeedForward::make: need at least in and out widths");
  FeedForward f;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    f.layers.push_back(Linear::make(widths[i], widths[i + 1], rng));
    f.activations.push_back(i + 2 < widths.size() ? Activation::relu
                                                  : Activation::none);
  }
  return f;
}

Tensor FeedForward::operator()(const Tensor& x, const ForwardContext& ctx) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (h.cols() != layers[i].in_features()) {
      throw std::invalid_argument("FeedForward: layer " + std::to_string(i) +
                                  " expects " +
                                  std::to_string(layers[i].in_features()) +
                                  " inputs, got " + std::to_string(h.cols()));
    }
    h = layers[i](h);
    if (activations[i] == Activation::relu) h = ctx.drop(relu(h));
  }
  return h;
}

void FeedForward::register_params(ParamSet& ps, const std::string& prefix) const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    layers[i].register_params(ps, prefix + "." + std::to_string(i));
}

// ---------------------------------------------------------------- encoder

EncoderLayer EncoderLayer::make(std::size_t d_model, std::size_t heads,
                                std::size_t head_dim, std::size_t ffn_width,
                                std::mt19937_64& rng) {
  if (heads == 0 || head_dim == 0 || d_model == 0 || ffn_width == 0)
    throw std::invalid_argument("EncoderLayer::make: zero-sized dimension");
  EncoderLayer l;
  l.heads = heads;
  l.head_dim = head_dim;
  const std::size_t inner = heads * head_dim;
  l.wq = glorot_param({d_model, inner}, rng);
  l.wk = glorot_param({d_model, inner}, rng);
  l.wv = glorot_param({d_model, inner}, rng);
  l.wo = glorot_param({inner, d_model}, rng);
  l.ln1_gain = ones_param({1, d_model});
  l.ln1_bias = zeros_param({1, d_model});
  l.ffn_in = Linear::make(d_model, ffn_width, rng);
  l.ffn_out = Linear::make(ffn_width, d_model, rng);
  l.ln2_gain = ones_param({1, d_model});
  l.ln2_bias = zeros_param({1, d_model});
  return l;
}

namespace {

std::vector<std::size_t> head_columns(std::size_t head, std::size_t head_dim) {
  std::vector<std::size_t> cols(head_dim);
  for (std::size_t j = 0; j < head_dim; ++j) cols[j] = head * head_dim + j;
  return cols;
}

Tensor head_attention(const Tensor& q, const Tensor& k, std::size_t head_dim) {
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  return softmax(scale(matmul(q, transpose(k)), inv_sqrt));
}

}  // namespace

Tensor multi_head_attention(const Tensor& seq, const EncoderLayer& l) {
  if (seq.rows() == 0) throw std::invalid_argument("self-attention: empty sequence");
  if (seq.cols() != l.wq.rows())
    throw std::invalid_argument("self-attention: sequence width " +
                                std::to_string(seq.cols()) + " != d_model " +
                                std::to_string(l.wq.rows()));
  Tensor q = matmul(seq, l.wq);
  Tensor k = matmul(seq, l.wk);
  Tensor v = matmul(seq, l.wv);
  std::vector<Tensor> outputs;
  outputs.reserve(l.heads);
  for (std::size_t h = 0; h < l.heads; ++h) {
    const auto cols = head_columns(h, l.head_dim);
    Tensor attn = head_attention(select_cols(q, cols), select_cols(k, cols), l.head_dim);
    outputs.push_back(transpose(matmul(attn, select_cols(v, cols))));
  }
  // Heads were stacked as (head_dim x rows) blocks; transpose back to
  // rows x (heads*head_dim).
  Tensor concat = transpose(stack_rows(outputs));
  return matmul(concat, l.wo);
}

Tensor EncoderLayer::attention_weights(const Tensor& seq, std::size_t head) const {
  const auto cols = head_columns(head, head_dim);
  return head_attention(select_cols(matmul(seq, wq), cols),
                        select_cols(matmul(seq, wk), cols), head_dim);
}

Tensor EncoderLayer::operator()(const Tensor& seq, const ForwardContext& ctx) const {
  Tensor attn = ctx.drop(multi_head_attention(seq, *this));
  Tensor h = layer_norm(add(seq, attn), ln1_gain, ln1_bias);
  Tensor ff = ffn_out(ctx.drop(relu(ffn_in(h))));
  return layer_norm(add(h, ctx.drop(ff)), ln2_gain, ln2_bias);
}

void EncoderLayer::register_params(ParamSet& ps, const std::string& prefix) const {
  ps.add(prefix + ".wq", wq);
  ps.add(prefix + ".wk", wk);
  ps.add(prefix + ".wv", wv);
  ps.add(prefix + ".wo", wo);
  ps.add(prefix + ".ln1_gain", ln1_gain);
  ps.add(prefix + ".ln1_bias", ln1_bias);
  ffn_in.register_params(ps, prefix + ".ffn_in");
  ffn_out.register_params(ps, prefix + ".ffn_out");
  ps.add(prefix + ".ln2_gain", ln2_gain);
  ps.add(prefix + ".ln2_bias", ln2_bias);
}

// ---------------------------------------------------------------- Adam

Adam::Adam(ParamSet params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& item : params_.items()) {
    m_.emplace_back(item.second.size(), 0.0);
    v_.emplace_back(item.second.size(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  auto& items = params_.items();
  for (std::size_t p = 0; p < items.size(); ++p) {
    Tensor& t = items[p].second;
    auto g = t.grad();
    auto w = t.mutable_values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (g[i] == 0.0 && m_[p][i] == 0.0 && v_[p][i] == 0.0) continue;
      m_[p][i] = cfg_.beta1 * m_[p][i] + (1.0 - cfg_.beta1) * g[i];
      v_[p][i] = cfg_.beta2 * v_[p][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m_[p][i] / bc1;
      const double vhat = v_[p][i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace dymen
