#pragma once

// Dense 2-D tensors with reverse-mode gradient recording.
//
// Every tensor is a rows x cols matrix of doubles; vectors are 1 x n rows.
// Operations build a dynamic graph whose nodes keep their parents alive, so a
// forward pass of any length can be differentiated with backward(). Leaves
// created with Tensor::parameter() accumulate gradients across calls until
// zero_grad(); interior nodes are recomputed on every backward().

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace dymen {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  bool requires_grad = false;
  bool is_leaf = true;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape);
  static Tensor row(std::vector<double> values);
  static Tensor scalar(double v);
  /// Trainable leaf. Gradients accumulate until zero_grad().
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rows() const { return node_->shape.rows; }
  std::size_t cols() const { return node_->shape.cols; }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> values() const { return node_->value; }
  /// Direct access for optimizers and finite-difference probes.
  std::span<double> mutable_values() { return node_->value; }
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  double item() const;
  double at(std::size_t r, std::size_t c) const;
  double operator[](std::size_t i) const { return node_->value[i]; }

  std::vector<double> to_vector() const { return node_->value; }

  /// Copy of the values with no graph attached.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Propagates d(loss)/d(.) into every reachable parameter. loss must be 1x1.
void backward(const Tensor& loss);

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

/// a * s where s is a 1x1 tensor.
Tensor scale_by(const Tensor& a, const Tensor& s);
/// m (r x c) plus a 1 x c row broadcast over rows.
Tensor add_row(const Tensor& m, const Tensor& row);
/// m * diag(d): column j of m scaled by d[j]; d is 1 x c.
Tensor scale_cols(const Tensor& m, const Tensor& d);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor sum(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);
/// x^T diag(d) y for three 1 x d rows.
Tensor bilinear(const Tensor& x, const Tensor& diag, const Tensor& y);

/// Row-wise softmax with max subtraction.
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);

/// 1 x c: maximum of each column; gradient flows to the first maximizer.
Tensor col_max(const Tensor& m);

Tensor element(const Tensor& a, std::size_t r, std::size_t c);
Tensor select_cols(const Tensor& a, std::span<const std::size_t> cols);
Tensor select_rows(const Tensor& a, std::span<const std::size_t> rows);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor stack_rows(std::span<const Tensor> rows);

/// Row-wise normalization to zero mean / unit variance, then gain and bias
/// (both 1 x c).
Tensor layer_norm(const Tensor& m, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
/// Per-column z-score over the rows of m.
Tensor zscore_cols(const Tensor& m, double eps = 1e-5);

/// Inverted dropout with a mask drawn from rng. rate 0 returns a unchanged.
Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng);

/// Indices of the k largest entries of a 1 x n row; ties keep the earlier
/// index. Returned in descending score order.
std::vector<std::size_t> top_k_indices(std::span<const double> scores,
                                       std::size_t k);

}  // namespace dymen
