#include "dymen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace dymen {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.rows) + "x" + std::to_string(s.cols) + ")";
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  require(a.defined() && b.defined(), std::string(op) + ": undefined tensor");
  if (!(a.shape() == b.shape())) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                to_string(a.shape()) + " vs " +
                                to_string(b.shape()));
  }
}

// Builds an interior node; drops the backward closure when nothing upstream
// needs a gradient.
Tensor make(Shape shape, std::vector<double> value, std::vector<NodePtr> parents,
            std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->shape = shape;
  n->value = std::move(value);
  n->is_leaf = false;
  bool needs = std::any_of(parents.begin(), parents.end(),
                           [](const NodePtr& p) { return p->requires_grad; });
  if (needs) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward = std::move(bw);
  }
  return Tensor(std::move(n));
}

// Gradient sink of a parent, or nullptr when it does not need one.
double* gsink(const NodePtr& p) {
  if (!p->requires_grad) return nullptr;
  p->ensure_grad();
  return p->grad.data();
}

}  // namespace

// ---------------------------------------------------------------- Tensor

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  require(values.size() == shape.size(),
          "Tensor::constant: value count does not match shape " +
              to_string(shape));
  auto n = std::make_shared<Node>();
  n->shape = shape;
  n->value = std::move(values);
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(Shape shape) {
  return constant(shape, std::vector<double>(shape.size(), 0.0));
}

Tensor Tensor::row(std::vector<double> values) {
  Shape s{1, values.size()};
  return constant(s, std::move(values));
}

Tensor Tensor::scalar(double v) { return constant({1, 1}, {v}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = constant(shape, std::move(values));
  t.node_->requires_grad = true;
  t.node_->ensure_grad();
  return t;
}

std::span<const double> Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  node_->grad.assign(node_->value.size(), 0.0);
}

double Tensor::item() const {
  require(size() == 1, "Tensor::item: tensor is " + to_string(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  require(r < rows() && c < cols(), "Tensor::at: index out of range");
  return node_->value[r * cols() + c];
}

Tensor Tensor::detach() const { return constant(shape(), node_->value); }

// ---------------------------------------------------------------- backward

void backward(const Tensor& loss) {
  require(loss.defined(), "backward: undefined loss");
  if (loss.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " +
                                to_string(loss.shape()));
  }
  const NodePtr& root = loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->is_leaf) n->grad.assign(n->value.size(), 0.0);
  }
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) n->backward(*n);
  }
}

// ---------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
  NodePtr pa = a.node(), pb = b.node();
  return make(a.shape(), std::move(v), {pa, pb}, [pa, pb](Node& out) {
    if (double* g = gsink(pa))
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i];
    if (double* g = gsink(pb))
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] - b[i];
  NodePtr pa = a.node(), pb = b.node();
  return make(a.shape(), std::move(v), {pa, pb}, [pa, pb](Node& out) {
    if (double* g = gsink(pa))
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i];
    if (double* g = gsink(pb))
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] -= out.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * b[i];
  NodePtr pa = a.node(), pb = b.node();
  return make(a.shape(), std::move(v), {pa, pb}, [pa, pb](Node& out) {
    if (double* g = gsink(pa))
      for (std::size_t i = 0; i < out.grad.size(); ++i)
        g[i] += out.grad[i] * pb->value[i];
    if (double* g = gsink(pb))
      for (std::size_t i = 0; i < out.grad.size(); ++i)
        g[i] += out.grad[i] * pa->value[i];
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * s;
  NodePtr pa = a.node();
  return make(a.shape(), std::move(v), {pa}, [pa, s](Node& out) {
    if (double* g = gsink(pa))
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i] * s;
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + s;
  NodePtr pa = a.node();
  return make(a.shape(), std::move(v), {pa}, [pa](Node& out) {
    if (double* g = gsink(pa))
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i];
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> v(a.size());
  // NaN passes through so a diverged input stays visible downstream.
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] <= 0.0 ? 0.0 : a[i];
  NodePtr pa = a.node();
  return make(a.shape(), std::move(v), {pa}, [pa](Node& out) {
    if (double* g = gsink(pa))
      for (std::size_t i = 0; i < out.grad.size(); ++i)
        if (pa->value[i] > 0.0) g[i] += out.grad[i];
  });
}

Tensor exp(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(a[i]);
  NodePtr pa = a.node();
  return make(a.shape(), std::move(v), {pa}, [pa](Node& out) {
    if (double* g = gsink(pa))
      for (std::size_t i = 0; i < out.grad.size(); ++i)
        g[i] += out.grad[i] * out.value[i];
  });
}

Tensor log(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::log(a[i]);
  NodePtr pa = a.node();
  return make(a.shape(), std::move(v), {pa}, [pa](Node& out) {
    if (double* g = gsink(pa))
      for (std::size_t i = 0; i < out.grad.size(); ++i)
        g[i] += out.grad[i] / pa->value[i];
  });
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
  require(s.size() == 1, "scale_by: scale must be 1x1");
  const double k = s.item();
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * k;
  NodePtr pa = a.node(), ps = s.node();
  return make(a.shape(), std::move(v), {pa, ps}, [pa, ps](Node& out) {
    const double k = ps->value[0];
    if (double* g = gsink(pa))
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i] * k;
    if (double* g = gsink(ps)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < out.grad.size(); ++i)
        acc += out.grad[i] * pa->value[i];
      g[0] += acc;
    }
  });
}

Tensor add_row(const Tensor& m, const Tensor& row) {
  require(row.rows() == 1 && row.cols() == m.cols(),
          "add_row: row " + to_string(row.shape()) + " vs matrix " +
              to_string(m.shape()));
  const std::size_t r = m.rows(), c = m.cols();
  std::vector<double> v(m.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) v[i * c + j] = m[i * c + j] + row[j];
  NodePtr pm = m.node(), pr = row.node();
  return make(m.shape(), std::move(v), {pm, pr}, [pm, pr, r, c](Node& out) {
    if (double* g = gsink(pm))
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i];
    if (double* g = gsink(pr))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += out.grad[i * c + j];
  });
}

Tensor scale_cols(const Tensor& m, const Tensor& d) {
  require(d.rows() == 1 && d.cols() == m.cols(),
          "scale_cols: diagonal " + to_string(d.shape()) + " vs matrix " +
              to_string(m.shape()));
  const std::size_t r = m.rows(), c = m.cols();
  std::vector<double> v(m.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) v[i * c + j] = m[i * c + j] * d[j];
  NodePtr pm = m.node(), pd = d.node();
  return make(m.shape(), std::move(v), {pm, pd}, [pm, pd, r, c](Node& out) {
    if (double* g = gsink(pm))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          g[i * c + j] += out.grad[i * c + j] * pd->value[j];
    if (double* g = gsink(pd))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          g[j] += out.grad[i * c + j] * pm->value[i * c + j];
  });
}

// ---------------------------------------------------------------- linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: " + to_string(a.shape()) + " x " +
                                to_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> v(m * n, 0.0);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      if (x == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) v[i * n + j] += x * bv[p * n + j];
    }
  NodePtr pa = a.node(), pb = b.node();
  return make({m, n}, std::move(v), {pa, pb}, [pa, pb, m, k, n](Node& out) {
    const double* go = out.grad.data();
    if (double* g = gsink(pa)) {
      const double* bv = pb->value.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += go[i * n + j] * bv[p * n + j];
          g[i * k + p] += acc;
        }
    }
    if (double* g = gsink(pb)) {
      const double* av = pa->value.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double x = av[i * k + p];
          if (x == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) g[p * n + j] += x * go[i * n + j];
        }
    }
  });
}

Tensor transpose(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) v[j * r + i] = a[i * c + j];
  NodePtr pa = a.node();
  return make({c, r}, std::move(v), {pa}, [pa, r, c](Node& out) {
    if (double* g = gsink(pa))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += out.grad[j * r + i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require(shape.size() == a.size(), "reshape: size mismatch " +
                                        to_string(a.shape()) + " -> " +
                                        to_string(shape));
  NodePtr pa = a.node();
  return make(shape, a.to_vector(), {pa}, [pa](Node& out) {
    if (double* g = gsink(pa))
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i];
  });
}

Tensor sum(const Tensor& a) {
  const auto av = a.values();
  const double s = std::accumulate(av.begin(), av.end(), 0.0);
  NodePtr pa = a.node();
  return make({1, 1}, {s}, {pa}, [pa](Node& out) {
    if (double* g = gsink(pa))
      for (std::size_t i = 0; i < pa->value.size(); ++i) g[i] += out.grad[0];
  });
}

Tensor dot(const Tensor& a, const Tensor& b) { return sum(mul(a, b)); }

Tensor bilinear(const Tensor& x, const Tensor& diag, const Tensor& y) {
  require(x.rows() == 1 && diag.rows() == 1 && y.rows() == 1,
          "bilinear: operands must be row vectors");
  if (x.cols() != diag.cols() || y.cols() != diag.cols()) {
    throw std::invalid_argument("bilinear: dimension mismatch " +
                                to_string(x.shape()) + ", " +
                                to_string(diag.shape()) + ", " +
                                to_string(y.shape()));
  }
  const std::size_t d = diag.cols();
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) s += x[i] * diag[i] * y[i];
  NodePtr px = x.node(), pd = diag.node(), py = y.node();
  return make({1, 1}, {s}, {px, pd, py}, [px, pd, py, d](Node& out) {
    const double go = out.grad[0];
    const double* xv = px->value.data();
    const double* dv = pd->value.data();
    const double* yv = py->value.data();
    if (double* g = gsink(px))
      for (std::size_t i = 0; i < d; ++i) g[i] += go * dv[i] * yv[i];
    if (double* g = gsink(pd))
      for (std::size_t i = 0; i < d; ++i) g[i] += go * xv[i] * yv[i];
    if (double* g = gsink(py))
      for (std::size_t i = 0; i < d; ++i) g[i] += go * xv[i] * dv[i];
  });
}

// ---------------------------------------------------------------- softmax family

Tensor softmax(const Tensor& a) {
  require(a.size() > 0, "softmax: empty input");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < r; ++i) {
    const double* in = a.values().data() + i * c;
    double* o = v.data() + i * c;
    const double mx = *std::max_element(in, in + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < c; ++j) o[j] /= z;
  }
  NodePtr pa = a.node();
  return make(a.shape(), std::move(v), {pa}, [pa, r, c](Node& out) {
    if (double* g = gsink(pa))
      for (std::size_t i = 0; i < r; ++i) {
        const double* y = out.value.data() + i * c;
        const double* go = out.grad.data() + i * c;
        double inner = 0.0;
        for (std::size_t j = 0; j < c; ++j) inner += go[j] * y[j];
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += y[j] * (go[j] - inner);
      }
  });
}

Tensor log_softmax(const Tensor& a) {
  require(a.size() > 0, "log_softmax: empty input");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < r; ++i) {
    const double* in = a.values().data() + i * c;
    const double mx = *std::max_element(in, in + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(in[j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) v[i * c + j] = in[j] - lz;
  }
  NodePtr pa = a.node();
  return make(a.shape(), std::move(v), {pa}, [pa, r, c](Node& out) {
    if (double* g = gsink(pa))
      for (std::size_t i = 0; i < r; ++i) {
        const double* ly = out.value.data() + i * c;
        const double* go = out.grad.data() + i * c;
        double total = 0.0;
        for (std::size_t j = 0; j < c; ++j) total += go[j];
        for (std::size_t j = 0; j < c; ++j)
          g[i * c + j] += go[j] - std::exp(ly[j]) * total;
      }
  });
}

// ---------------------------------------------------------------- selection

Tensor col_max(const Tensor& m) {
  require(m.rows() > 0, "col_max: no rows");
  const std::size_t r = m.rows(), c = m.cols();
  std::vector<double> v(c);
  std::vector<std::size_t> arg(c, 0);
  for (std::size_t j = 0; j < c; ++j) {
    double best = m[j];
    for (std::size_t i = 1; i < r; ++i)
      if (m[i * c + j] > best) {
        best = m[i * c + j];
        arg[j] = i;
      }
    v[j] = best;
  }
  NodePtr pm = m.node();
  return make({1, c}, std::move(v), {pm}, [pm, arg, c](Node& out) {
    if (double* g = gsink(pm))
      for (std::size_t j = 0; j < c; ++j) g[arg[j] * c + j] += out.grad[j];
  });
}

Tensor element(const Tensor& a, std::size_t r, std::size_t c) {
  require(r < a.rows() && c < a.cols(), "element: index out of range");
  const std::size_t idx = r * a.cols() + c;
  NodePtr pa = a.node();
  return make({1, 1}, {a[idx]}, {pa}, [pa, idx](Node& out) {
    if (double* g = gsink(pa)) g[idx] += out.grad[0];
  });
}

Tensor select_cols(const Tensor& a, std::span<const std::size_t> cols) {
  const std::size_t r = a.rows(), c = a.cols(), k = cols.size();
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  for (std::size_t j : idx) require(j < c, "select_cols: index out of range");
  std::vector<double> v(r * k);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < k; ++j) v[i * k + j] = a[i * c + idx[j]];
  NodePtr pa = a.node();
  return make({r, k}, std::move(v), {pa}, [pa, idx, r, c, k](Node& out) {
    if (double* g = gsink(pa))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < k; ++j) g[i * c + idx[j]] += out.grad[i * k + j];
  });
}

Tensor select_rows(const Tensor& a, std::span<const std::size_t> rows) {
  const std::size_t c = a.cols(), k = rows.size();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  for (std::size_t i : idx) require(i < a.rows(), "select_rows: index out of range");
  std::vector<double> v(k * c);
  for (std::size_t i = 0; i < k; ++i)
    std::copy_n(a.values().data() + idx[i] * c, c, v.data() + i * c);
  NodePtr pa = a.node();
  return make({k, c}, std::move(v), {pa}, [pa, idx, c, k](Node& out) {
    if (double* g = gsink(pa))
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < c; ++j) g[idx[i] * c + j] += out.grad[i * c + j];
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require(a.rows() == b.rows(), "concat_cols: row count mismatch " +
                                    to_string(a.shape()) + " vs " +
                                    to_string(b.shape()));
  const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols(), c = ca + cb;
  std::vector<double> v(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(a.values().data() + i * ca, ca, v.data() + i * c);
    std::copy_n(b.values().data() + i * cb, cb, v.data() + i * c + ca);
  }
  NodePtr pa = a.node(), pb = b.node();
  return make({r, c}, std::move(v), {pa, pb}, [pa, pb, r, ca, cb, c](Node& out) {
    if (double* g = gsink(pa))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < ca; ++j) g[i * ca + j] += out.grad[i * c + j];
    if (double* g = gsink(pb))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < cb; ++j) g[i * cb + j] += out.grad[i * c + ca + j];
  });
}

Tensor stack_rows(std::span<const Tensor> rows) {
  require(!rows.empty(), "stack_rows: no rows");
  const std::size_t c = rows.front().cols();
  std::size_t total = 0;
  for (const Tensor& t : rows) {
    require(t.cols() == c, "stack_rows: column count mismatch");
    total += t.rows();
  }
  std::vector<double> v;
  v.reserve(total * c);
  std::vector<NodePtr> parents;
  parents.reserve(rows.size());
  for (const Tensor& t : rows) {
    v.insert(v.end(), t.values().begin(), t.values().end());
    parents.push_back(t.node());
  }
  auto ps = parents;
  return make({total, c}, std::move(v), std::move(parents), [ps](Node& out) {
    std::size_t off = 0;
    for (const NodePtr& p : ps) {
      if (double* g = gsink(p))
        for (std::size_t i = 0; i < p->value.size(); ++i) g[i] += out.grad[off + i];
      off += p->value.size();
    }
  });
}

// ---------------------------------------------------------------- normalization

Tensor layer_norm(const Tensor& m, const Tensor& gain, const Tensor& bias,
                  double eps) {
  const std::size_t r = m.rows(), c = m.cols();
  require(gain.rows() == 1 && gain.cols() == c && bias.rows() == 1 &&
              bias.cols() == c,
          "layer_norm: gain/bias must be 1 x " + std::to_string(c));
  std::vector<double> xhat(m.size()), v(m.size()), inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = m.values().data() + i * c;
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += x[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (x[j] - mean) * inv_std[i];
      v[i * c + j] = xhat[i * c + j] * gain[j] + bias[j];
    }
  }
  NodePtr pm = m.node(), pg = gain.node(), pb = bias.node();
  return make(m.shape(), std::move(v), {pm, pg, pb},
              [pm, pg, pb, xhat = std::move(xhat), inv_std = std::move(inv_std), r,
               c](Node& out) {
                const double* go = out.grad.data();
                if (double* g = gsink(pg))
                  for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j)
                      g[j] += go[i * c + j] * xhat[i * c + j];
                if (double* g = gsink(pb))
                  for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) g[j] += go[i * c + j];
                if (double* g = gsink(pm)) {
                  const double n = static_cast<double>(c);
                  for (std::size_t i = 0; i < r; ++i) {
                    double s1 = 0.0, s2 = 0.0;
                    for (std::size_t j = 0; j < c; ++j) {
                      const double dy = go[i * c + j] * pg->value[j];
                      s1 += dy;
                      s2 += dy * xhat[i * c + j];
                    }
                    for (std::size_t j = 0; j < c; ++j) {
                      const double dy = go[i * c + j] * pg->value[j];
                      g[i * c + j] +=
                          inv_std[i] * (dy - s1 / n - xhat[i * c + j] * s2 / n);
                    }
                  }
                }
              });
}

Tensor zscore_cols(const Tensor& m, double eps) {
  const std::size_t rows = m.rows();
  Tensor ones = Tensor::constant({1, rows}, std::vector<double>(rows, 1.0));
  Tensor zeros = Tensor::zeros({1, rows});
  return transpose(layer_norm(transpose(m), ones, zeros, eps));
}

Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng) {
  require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0, 1)");
  if (rate == 0.0) return a;
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> mask(a.size());
  for (double& x : mask) x = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
  return mul(a, Tensor::constant(a.shape(), std::move(mask)));
}

std::vector<std::size_t> top_k_indices(std::span<const double> scores,
                                       std::size_t k) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  if (idx.size() > k) idx.resize(k);
  return idx;
}

}  // namespace dymen
