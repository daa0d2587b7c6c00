#include "cta/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <unordered_set>

#include <fmt/format.h>

#include "cta/error.hpp"

namespace cta {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(Node&)>;

std::atomic<std::uint64_t> g_sequence{0};
thread_local bool g_grad_enabled = true;

NodePtr new_node(Shape shape, std::vector<double> values, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  node->sequence = ++g_sequence;
  return node;
}

Tensor make_op(const char* op, Shape shape, std::vector<double> values,
               std::initializer_list<const Tensor*> parents, BackwardFn fn) {
  bool needs_grad = false;
  if (g_grad_enabled)
    for (const Tensor* p : parents) needs_grad = needs_grad || p->requires_grad();
  auto node = new_node(std::move(shape), std::move(values), needs_grad);
  node->op = op;
  if (needs_grad) {
    for (const Tensor* p : parents) node->parents.push_back(p->node_ptr());
    node->backward = std::move(fn);
  }
  return Tensor(std::move(node));
}

Tensor make_op(const char* op, Shape shape, std::vector<double> values,
               const std::vector<Tensor>& parents, BackwardFn fn) {
  bool needs_grad = false;
  if (g_grad_enabled)
    for (const Tensor& p : parents) needs_grad = needs_grad || p.requires_grad();
  auto node = new_node(std::move(shape), std::move(values), needs_grad);
  node->op = op;
  if (needs_grad) {
    for (const Tensor& p : parents) node->parents.push_back(p.node_ptr());
    node->backward = std::move(fn);
  }
  return Tensor(std::move(node));
}

// Parent gradient buffer, or nullptr when that parent does not need one.
std::vector<double>* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? &p.grad_buffer() : nullptr;
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw DimensionError(fmt::format("{}: undefined tensor", op));
}

void require_rank2(const Tensor& t, const char* op) {
  require_defined(t, op);
  if (t.rank() != 2) {
    throw DimensionError(fmt::format("{}: expected a matrix, got {}", op,
                                     shape_string(t.shape())));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw DimensionError(fmt::format("{}: shape mismatch {} vs {}", op,
                                     shape_string(a.shape()),
                                     shape_string(b.shape())));
  }
}

void require_single(const Tensor& s, const char* op) {
  require_defined(s, op);
  if (s.size() != 1) {
    throw DimensionError(fmt::format("{}: expected a single value, got {}", op,
                                     shape_string(s.shape())));
  }
}

template <typename Forward, typename Derivative>
Tensor unary(const char* op, const Tensor& a, Forward f, Derivative d) {
  require_defined(a, op);
  const auto in = a.values();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_op(op, a.shape(), std::move(out), {&a}, [d](Node& self) {
    auto* ga = parent_grad(self, 0);
    if (!ga) return;
    const auto& x = self.parents[0]->values;
    for (std::size_t i = 0; i < x.size(); ++i) {
      (*ga)[i] += self.grad[i] * d(x[i], self.values[i]);
    }
  });
}

// Strided view of the slices a softmax runs over.
struct SliceLayout {
  std::size_t count;
  std::size_t length;
  std::size_t stride;
  std::size_t outer_step;
};

SliceLayout softmax_layout(const Shape& shape, std::size_t axis) {
  if (shape.size() == 1 && axis == 0) return {1, shape[0], 1, 0};
  if (shape.size() == 2 && axis == 1) return {shape[0], shape[1], 1, shape[1]};
  if (shape.size() == 2 && axis == 0) return {shape[1], shape[0], shape[1], 1};
  throw DimensionError(fmt::format("softmax: axis {} invalid for {}", axis,
                                   shape_string(shape)));
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += " x ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw DimensionError(fmt::format("tensor: shape {} needs {} values, got {}",
                                     shape_string(shape), shape_size(shape),
                                     values.size()));
  }
  node_ = new_node(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->values.size(); }

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rows() on non-matrix " + shape_string(shape()));
  return shape()[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("cols() on non-matrix " + shape_string(shape()));
  return shape()[1];
}

std::span<const double> Tensor::values() const { return node_->values; }
std::span<double> Tensor::mutable_values() { return node_->values; }

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on " + shape_string(shape()));
  return node_->values[0];
}

double Tensor::at(std::size_t i) const { return node_->values.at(i); }
double Tensor::at(std::size_t r, std::size_t c) const {
  return node_->values.at(r * cols() + c);
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(size(), 0.0);
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() { return node_->grad_buffer(); }
void Tensor::zero_grad() { node_->grad.clear(); }

const char* Tensor::op_name() const { return node_->op; }
std::uint64_t Tensor::sequence() const { return node_->sequence; }
std::size_t Tensor::parent_count() const { return node_->parents.size(); }
Tensor Tensor::parent(std::size_t i) const { return Tensor(node_->parents.at(i)); }

Tensor Tensor::detach() const { return Tensor(shape(), node_->values, false); }

// ---- backward -------------------------------------------------------------

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

std::vector<Tensor> backward_order(const Tensor& root) {
  std::vector<NodePtr> nodes;
  std::unordered_set<const Node*> seen;
  std::vector<NodePtr> stack;
  if (root.requires_grad()) stack.push_back(root.node_ptr());
  while (!stack.empty()) {
    NodePtr n = std::move(stack.back());
    stack.pop_back();
    if (!seen.insert(n.get()).second) continue;
    for (const auto& p : n->parents) {
      if (p->requires_grad && !seen.contains(p.get())) stack.push_back(p);
    }
    nodes.push_back(std::move(n));
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const NodePtr& a, const NodePtr& b) { return a->sequence > b->sequence; });
  std::vector<Tensor> out;
  out.reserve(nodes.size());
  for (auto& n : nodes) out.emplace_back(std::move(n));
  return out;
}

void backward(const Tensor& root) {
  require_defined(root, "backward");
  if (root.size() != 1) {
    throw DimensionError("backward: root must be a single value, got " +
                         shape_string(root.shape()));
  }
  if (!root.requires_grad()) return;
  auto order = backward_order(root);
  // Interior gradients are recomputed per pass; leaves accumulate.
  for (auto& t : order) {
    if (t.node().backward) t.node().grad.clear();
  }
  root.node().grad_buffer()[0] += 1.0;
  for (auto& t : order) {
    Node& n = t.node();
    if (n.backward && !n.grad.empty()) n.backward(n);
  }
}

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError(fmt::format("matmul: shape mismatch {} x {}",
                                     shape_string(a.shape()), shape_string(b.shape())));
  }
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return make_op("matmul", {m, n}, std::move(out), {&a, &b}, [m, k, n](Node& self) {
    const auto& g = self.grad;
    const auto& av = self.parents[0]->values;
    const auto& bv = self.parents[1]->values;
    if (auto* ga = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
          (*ga)[i * k + p] += acc;
        }
      }
    }
    if (auto* gb = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) (*gb)[p * n + j] += aip * g[i * n + j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  const auto av = a.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return make_op("transpose", {n, m}, std::move(out), {&a}, [m, n](Node& self) {
    auto* ga = parent_grad(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += self.grad[j * m + i];
  });
}

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return make_op("add", a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (auto* g = parent_grad(self, p))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return make_op("sub", a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    if (auto* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return make_op("mul", a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    const auto& av = self.parents[0]->values;
    const auto& bv = self.parents[1]->values;
    if (auto* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    if (auto* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor neg(const Tensor& a) {
  return unary(
      "neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log1p(const Tensor& a) {
  return unary(
      "log1p", a, [](double x) { return std::log1p(x); },
      [](double x, double) { return 1.0 / (1.0 + x); });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

namespace {
double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a, [](double x) { return stable_sigmoid(x); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor log_sigmoid(const Tensor& a) {
  return unary(
      "log_sigmoid", a,
      [](double x) { return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) { return stable_sigmoid(-x); });
}

Tensor tanh(const Tensor& a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor square(const Tensor& a) {
  return unary(
      "square", a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Tensor add_constant(const Tensor& a, std::span<const double> offsets) {
  require_defined(a, "add_constant");
  if (offsets.size() != a.size()) {
    throw DimensionError(fmt::format("add_constant: {} offsets for {}", offsets.size(),
                                     shape_string(a.shape())));
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + offsets[i];
  return make_op("add_constant", a.shape(), std::move(out), {&a}, [](Node& self) {
    if (auto* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

// ---- mixed shapes ---------------------------------------------------------

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank2(x, "add_bias");
  require_defined(bias, "add_bias");
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.size() != n || bias.rank() != 1) {
    throw DimensionError(fmt::format("add_bias: bias {} does not fit {}",
                                     shape_string(bias.shape()), shape_string(x.shape())));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bias.values()[j];
  return make_op("add_bias", x.shape(), std::move(out), {&x, &bias}, [m, n](Node& self) {
    if (auto* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*g)[j] += self.grad[i * n + j];
  });
}

Tensor mul_scalar(const Tensor& x, const Tensor& s) {
  require_defined(x, "mul_scalar");
  require_single(s, "mul_scalar");
  const double sv = s.values()[0];
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * sv;
  return make_op("mul_scalar", x.shape(), std::move(out), {&x, &s}, [](Node& self) {
    const auto& xv = self.parents[0]->values;
    const double sv = self.parents[1]->values[0];
    if (auto* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * sv;
    if (auto* g = parent_grad(self, 1)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < xv.size(); ++i) acc += self.grad[i] * xv[i];
      (*g)[0] += acc;
    }
  });
}

Tensor add_scalar(const Tensor& x, const Tensor& s) {
  require_defined(x, "add_scalar");
  require_single(s, "add_scalar");
  const double sv = s.values()[0];
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] + sv;
  return make_op("add_scalar", x.shape(), std::move(out), {&x, &s}, [](Node& self) {
    if (auto* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = parent_grad(self, 1)) {
      double acc = 0.0;
      for (double v : self.grad) acc += v;
      (*g)[0] += acc;
    }
  });
}

Tensor tile_rows(const Tensor& row_tensor, std::size_t count) {
  require_defined(row_tensor, "tile_rows");
  const bool is_row = row_tensor.rank() == 1 ||
                      (row_tensor.rank() == 2 && row_tensor.shape()[0] == 1);
  if (!is_row) {
    throw DimensionError("tile_rows: expected a single row, got " +
                         shape_string(row_tensor.shape()));
  }
  const std::size_t n = row_tensor.size();
  std::vector<double> out(count * n);
  for (std::size_t i = 0; i < count; ++i)
    std::copy(row_tensor.values().begin(), row_tensor.values().end(), out.begin() + i * n);
  return make_op("tile_rows", {count, n}, std::move(out), {&row_tensor},
                 [count, n](Node& self) {
                   auto* g = parent_grad(self, 0);
                   if (!g) return;
                   for (std::size_t i = 0; i < count; ++i)
                     for (std::size_t j = 0; j < n; ++j) (*g)[j] += self.grad[i * n + j];
                 });
}

Tensor weighted_sum(const Tensor& weights, const Tensor& rows_tensor) {
  require_rank2(rows_tensor, "weighted_sum");
  require_defined(weights, "weighted_sum");
  const std::size_t l = rows_tensor.rows(), d = rows_tensor.cols();
  const bool column = (weights.rank() == 2 && weights.shape()[0] == l && weights.shape()[1] == 1) ||
                      (weights.rank() == 1 && weights.shape()[0] == l);
  if (!column) {
    throw DimensionError(fmt::format("weighted_sum: weights {} do not match rows {}",
                                     shape_string(weights.shape()),
                                     shape_string(rows_tensor.shape())));
  }
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < l; ++i) {
    const double w = weights.values()[i];
    if (w == 0.0) continue;
    for (std::size_t j = 0; j < d; ++j) out[j] += w * rows_tensor.values()[i * d + j];
  }
  return make_op("weighted_sum", {d}, std::move(out), {&weights, &rows_tensor},
                 [l, d](Node& self) {
                   const auto& wv = self.parents[0]->values;
                   const auto& rv = self.parents[1]->values;
                   if (auto* g = parent_grad(self, 0)) {
                     for (std::size_t i = 0; i < l; ++i) {
                       double acc = 0.0;
                       for (std::size_t j = 0; j < d; ++j) acc += self.grad[j] * rv[i * d + j];
                       (*g)[i] += acc;
                     }
                   }
                   if (auto* g = parent_grad(self, 1)) {
                     for (std::size_t i = 0; i < l; ++i)
                       for (std::size_t j = 0; j < d; ++j) (*g)[i * d + j] += wv[i] * self.grad[j];
                   }
                 });
}

// ---- structural -----------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  for (const auto& p : parts) require_defined(p, "concat");
  const std::size_t rank = parts[0].rank();
  for (const auto& p : parts) {
    if (p.rank() != rank) throw DimensionError("concat: mixed ranks");
  }
  if (rank == 1) {
    if (axis != 0) throw DimensionError("concat: rank-1 inputs only join on axis 0");
    std::vector<double> out;
    std::vector<std::size_t> sizes;
    for (const auto& p : parts) {
      out.insert(out.end(), p.values().begin(), p.values().end());
      sizes.push_back(p.size());
    }
    const std::size_t total = out.size();
    return make_op("concat", {total}, std::move(out), parts, [sizes](Node& self) {
      std::size_t offset = 0;
      for (std::size_t p = 0; p < sizes.size(); ++p) {
        if (auto* g = parent_grad(self, p))
          for (std::size_t i = 0; i < sizes[p]; ++i) (*g)[i] += self.grad[offset + i];
        offset += sizes[p];
      }
    });
  }
  if (rank != 2 || axis > 1) {
    throw DimensionError(fmt::format("concat: unsupported rank {} / axis {}", rank, axis));
  }
  if (axis == 0) {
    const std::size_t n = parts[0].cols();
    std::size_t m = 0;
    std::vector<std::size_t> row_counts;
    for (const auto& p : parts) {
      if (p.cols() != n) {
        throw DimensionError(fmt::format("concat: column mismatch {} vs {}",
                                         shape_string(parts[0].shape()),
                                         shape_string(p.shape())));
      }
      m += p.rows();
      row_counts.push_back(p.rows());
    }
    std::vector<double> out;
    out.reserve(m * n);
    for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
    return make_op("concat", {m, n}, std::move(out), parts, [row_counts, n](Node& self) {
      std::size_t offset = 0;
      for (std::size_t p = 0; p < row_counts.size(); ++p) {
        const std::size_t len = row_counts[p] * n;
        if (auto* g = parent_grad(self, p))
          for (std::size_t i = 0; i < len; ++i) (*g)[i] += self.grad[offset + i];
        offset += len;
      }
    });
  }
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  std::vector<std::size_t> col_counts;
  for (const auto& p : parts) {
    if (p.rows() != m) {
      throw DimensionError(fmt::format("concat: row mismatch {} vs {}",
                                       shape_string(parts[0].shape()),
                                       shape_string(p.shape())));
    }
    n += p.cols();
    col_counts.push_back(p.cols());
  }
  std::vector<double> out(m * n);
  std::size_t col = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < c; ++j) out[i * n + col + j] = p.values()[i * c + j];
    col += c;
  }
  return make_op("concat", {m, n}, std::move(out), parts, [col_counts, m, n](Node& self) {
    std::size_t col = 0;
    for (std::size_t p = 0; p < col_counts.size(); ++p) {
      const std::size_t c = col_counts[p];
      if (auto* g = parent_grad(self, p))
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[i * n + col + j];
      col += c;
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  if (shape_size(shape) != a.size()) {
    throw DimensionError(fmt::format("reshape: {} cannot become {}",
                                     shape_string(a.shape()), shape_string(shape)));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_op("reshape", std::move(shape), std::move(out), {&a}, [](Node& self) {
    if (auto* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  require_rank2(a, "slice_rows");
  const std::size_t n = a.cols();
  if (begin + count > a.rows()) {
    throw DimensionError(fmt::format("slice_rows: [{}, {}) outside {}", begin, begin + count,
                                     shape_string(a.shape())));
  }
  std::vector<double> out(a.values().begin() + begin * n,
                          a.values().begin() + (begin + count) * n);
  return make_op("slice_rows", {count, n}, std::move(out), {&a},
                 [begin, n](Node& self) {
                   auto* g = parent_grad(self, 0);
                   if (!g) return;
                   for (std::size_t i = 0; i < self.grad.size(); ++i)
                     (*g)[begin * n + i] += self.grad[i];
                 });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  require_rank2(a, "slice_cols");
  const std::size_t m = a.rows(), n = a.cols();
  if (begin + count > n) {
    throw DimensionError(fmt::format("slice_cols: [{}, {}) outside {}", begin, begin + count,
                                     shape_string(a.shape())));
  }
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = a.values()[i * n + begin + j];
  return make_op("slice_cols", {m, count}, std::move(out), {&a},
                 [begin, count, m, n](Node& self) {
                   auto* g = parent_grad(self, 0);
                   if (!g) return;
                   for (std::size_t i = 0; i < m; ++i)
                     for (std::size_t j = 0; j < count; ++j)
                       (*g)[i * n + begin + j] += self.grad[i * count + j];
                 });
}

Tensor row(const Tensor& a, std::size_t index) { return slice_rows(a, index, 1); }

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices) {
  require_rank2(table, "gather_rows");
  const std::size_t rows = table.rows(), d = table.cols();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<double> out(idx.size() * d);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= rows) {
      throw DimensionError(fmt::format("gather_rows: index {} outside {}", idx[r],
                                       shape_string(table.shape())));
    }
    std::copy_n(table.values().begin() + idx[r] * d, d, out.begin() + r * d);
  }
  const std::size_t k = idx.size();
  return make_op("gather_rows", {k, d}, std::move(out), {&table},
                 [idx = std::move(idx), d](Node& self) {
                   auto* g = parent_grad(self, 0);
                   if (!g) return;
                   for (std::size_t r = 0; r < idx.size(); ++r)
                     for (std::size_t j = 0; j < d; ++j) (*g)[idx[r] * d + j] += self.grad[r * d + j];
                 });
}

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& a, std::size_t axis) {
  require_defined(a, "sum");
  if (a.rank() == 1 && axis == 0) return sum_all(a);
  require_rank2(a, "sum");
  if (axis > 1) throw DimensionError(fmt::format("sum: axis {} invalid", axis));
  const std::size_t m = a.rows(), n = a.cols();
  const std::size_t out_size = axis == 0 ? n : m;
  std::vector<double> out(out_size, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[axis == 0 ? j : i] += a.values()[i * n + j];
  return make_op("sum", {out_size}, std::move(out), {&a}, [axis, m, n](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) (*g)[i * n + j] += self.grad[axis == 0 ? j : i];
  });
}

Tensor sum_all(const Tensor& a) {
  require_defined(a, "sum_all");
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  return make_op("sum_all", {1}, {acc}, {&a}, [](Node& self) {
    if (auto* g = parent_grad(self, 0))
      for (double& v : *g) v += self.grad[0];
  });
}

Tensor mean_all(const Tensor& a) {
  require_defined(a, "mean_all");
  if (a.size() == 0) throw DimensionError("mean_all: empty tensor");
  return scale(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

Tensor logsumexp_all(const Tensor& a) {
  require_defined(a, "logsumexp_all");
  if (a.size() == 0) throw DimensionError("logsumexp_all: empty tensor");
  const auto v = a.values();
  const double m = *std::max_element(v.begin(), v.end());
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  const double lse = m + std::log(acc);
  return make_op("logsumexp", {1}, {lse}, {&a}, [](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    const auto& x = self.parents[0]->values;
    for (std::size_t i = 0; i < x.size(); ++i)
      (*g)[i] += self.grad[0] * std::exp(x[i] - self.values[0]);
  });
}

// ---- normalization --------------------------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis) {
  require_defined(x, "softmax");
  const SliceLayout s = softmax_layout(x.shape(), axis);
  if (s.length == 0) throw DimensionError("softmax: empty axis");
  const auto in = x.values();
  std::vector<double> out(in.size());
  for (std::size_t c = 0; c < s.count; ++c) {
    const std::size_t base = c * s.outer_step;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < s.length; ++i) m = std::max(m, in[base + i * s.stride]);
    double total = 0.0;
    for (std::size_t i = 0; i < s.length; ++i) {
      const double e = std::exp(in[base + i * s.stride] - m);
      out[base + i * s.stride] = e;
      total += e;
    }
    for (std::size_t i = 0; i < s.length; ++i) out[base + i * s.stride] /= total;
  }
  return make_op("softmax", x.shape(), std::move(out), {&x}, [s](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    const auto& y = self.values;
    for (std::size_t c = 0; c < s.count; ++c) {
      const std::size_t base = c * s.outer_step;
      double dot = 0.0;
      for (std::size_t i = 0; i < s.length; ++i) {
        const std::size_t k = base + i * s.stride;
        dot += self.grad[k] * y[k];
      }
      for (std::size_t i = 0; i < s.length; ++i) {
        const std::size_t k = base + i * s.stride;
        (*g)[k] += y[k] * (self.grad[k] - dot);
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  require_rank2(x, "layer_norm");
  const std::size_t m = x.rows(), d = x.cols();
  if (d < 2) {
    throw DimensionError("layer_norm: degenerate row width " + std::to_string(d) +
                         " (need at least 2)");
  }
  if (gain.size() != d || bias.size() != d) {
    throw DimensionError(fmt::format("layer_norm: gain {} / bias {} do not fit {}",
                                     shape_string(gain.shape()), shape_string(bias.shape()),
                                     shape_string(x.shape())));
  }
  const auto xv = x.values();
  std::vector<double> normalized(m * d), inv_std(m), out(m * d);
  for (std::size_t i = 0; i < m; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xv[i * d + j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xv[i * d + j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    for (std::size_t j = 0; j < d; ++j) {
      const double n = (xv[i * d + j] - mean) * inv_std[i];
      normalized[i * d + j] = n;
      out[i * d + j] = n * gain.values()[j] + bias.values()[j];
    }
  }
  return make_op(
      "layer_norm", x.shape(), std::move(out), {&x, &gain, &bias},
      [m, d, normalized = std::move(normalized), inv_std = std::move(inv_std)](Node& self) {
        const auto& gv = self.parents[1]->values;
        if (auto* gx = parent_grad(self, 0)) {
          std::vector<double> gn(d);
          for (std::size_t i = 0; i < m; ++i) {
            double mean_gn = 0.0, mean_gn_n = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              gn[j] = self.grad[i * d + j] * gv[j];
              mean_gn += gn[j];
              mean_gn_n += gn[j] * normalized[i * d + j];
            }
            mean_gn /= static_cast<double>(d);
            mean_gn_n /= static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
              (*gx)[i * d + j] +=
                  inv_std[i] * (gn[j] - mean_gn - normalized[i * d + j] * mean_gn_n);
            }
          }
        }
        if (auto* gg = parent_grad(self, 1))
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < d; ++j)
              (*gg)[j] += self.grad[i * d + j] * normalized[i * d + j];
        if (auto* gb = parent_grad(self, 2))
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < d; ++j) (*gb)[j] += self.grad[i * d + j];
      });
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  require_defined(x, "dropout");
  if (rate < 0.0 || rate >= 1.0) {
    throw DimensionError(fmt::format("dropout: rate {} outside [0, 1)", rate));
  }
  if (!training || rate == 0.0) return x;
  const double keep = 1.0 - rate;
  std::vector<double> mask(x.size());
  for (double& v : mask) v = uniform01(rng) < keep ? 1.0 / keep : 0.0;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * mask[i];
  return make_op("dropout", x.shape(), std::move(out), {&x},
                 [mask = std::move(mask)](Node& self) {
                   if (auto* g = parent_grad(self, 0))
                     for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * mask[i];
                 });
}

// ---- verification ---------------------------------------------------------

namespace {

// Ridders' extrapolation: central differences at steps shrinking by `con`,
// combined in a Neville tableau; returns the entry with the smallest internal
// error estimate.
template <class F>
double ridders_derivative(F&& at, double h) {
  constexpr int kTab = 10;
  constexpr double con = 1.4, con2 = con * con, safe = 2.0;
  double a[kTab][kTab];
  double hh = h;
  a[0][0] = (at(hh) - at(-hh)) / (2.0 * hh);
  double err = std::numeric_limits<double>::max();
  double ans = a[0][0];
  for (int i = 1; i < kTab; ++i) {
    hh /= con;
    a[0][i] = (at(hh) - at(-hh)) / (2.0 * hh);
    double fac = con2;
    for (int j = 1; j <= i; ++j) {
      a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
      fac *= con2;
      const double errt =
          std::max(std::abs(a[j][i] - a[j - 1][i]), std::abs(a[j][i] - a[j - 1][i - 1]));
      if (errt <= err) {
        err = errt;
        ans = a[j][i];
      }
    }
    if (std::abs(a[i][i] - a[i - 1][i - 1]) >= safe * err && i >= kTab / 2) break;
  }
  return ans;
}

}  // namespace

GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<NamedTensor> params,
                           const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw NumericError("grad_check: step must be positive");
  auto evaluate = [&f]() {
    NoGradGuard no_grad;
    const double v = f().item();
    if (!std::isfinite(v)) throw NumericError("grad_check: objective is not finite");
    return v;
  };

  for (auto& p : params) {
    if (!p.tensor.requires_grad()) {
      throw NumericError("grad_check: parameter '" + p.name + "' does not require grad");
    }
    p.tensor.zero_grad();
  }
  const Tensor out = f();
  if (!std::isfinite(out.item())) throw NumericError("grad_check: objective is not finite");
  backward(out);
  if (options.after_backward) options.after_backward(params);

  GradCheckResult result;
  for (auto& p : params) {
    const std::vector<double> analytic = p.tensor.grad();
    auto values = p.tensor.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      const double h = options.step;
      auto at = [&](double offset) {
        values[i] = original + offset;
        return evaluate();
      };
      double numeric = 0.0;
      switch (options.method) {
        case DiffMethod::central:
          numeric = (at(h) - at(-h)) / (2.0 * h);
          break;
        case DiffMethod::five_point:
          numeric = (at(-2 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2 * h)) / (12.0 * h);
          break;
        case DiffMethod::ridders: {
          // Disagreement with a tenfold smaller starting step means a kink
          // lies between the two scales; the smaller scale is then trusted.
          const double wide = ridders_derivative(at, h);
          const double narrow = ridders_derivative(at, h / 10.0);
          const double gap = std::abs(wide - narrow);
          const bool smooth = gap <= 1e-5 * std::max(std::abs(wide), std::abs(narrow)) + 1e-9;
          numeric = smooth ? wide : narrow;
          break;
        }
      }
      values[i] = original;
      const double diff = std::abs(analytic[i] - numeric);
      const double magnitude = std::max(std::abs(analytic[i]), std::abs(numeric));
      const double err = magnitude < options.absolute_floor ? diff : diff / magnitude;
      ++result.coordinates;
      if (result.worst_parameter.empty() || err > result.max_error) {
        result.max_error = err;
        result.worst_parameter = p.name;
        result.worst_index = i;
        result.worst_analytic = analytic[i];
        result.worst_numeric = numeric;
      }
    }
    p.tensor.zero_grad();
  }
  return result;
}

GradCheckResult grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                           double step) {
  std::vector<NamedTensor> named;
  for (std::size_t i = 0; i < params.size(); ++i) {
    named.push_back({"param" + std::to_string(i), params[i]});
  }
  GradCheckOptions options;
  options.step = step;
  return grad_check(f, std::move(named), options);
}

}  // namespace cta
