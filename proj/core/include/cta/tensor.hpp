#pragma once

// Dense row-major tensors of doubles with reverse-mode differentiation.
//
// A Tensor is a shared handle to a graph node. Operations on tensors that
// require gradients record their parents and a backward closure; backward()
// walks every reachable node once in reverse creation order. Each node gets a
// process-wide increasing sequence number at creation, so creation order is a
// topological order of the graph.
//
// Shapes are never broadcast implicitly. The few mixed-shape operations the
// model needs (bias rows, scalar parameters, weighted row sums) have their
// own named functions.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cta/rng.hpp"

namespace cta {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until a gradient reaches the node
  bool requires_grad = false;
  std::uint64_t sequence = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  /// Leaf holding a copy of `values`. Throws DimensionError when the value
  /// count does not match the shape.
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor parameter(Shape shape, std::vector<double> values) {
    return Tensor(std::move(shape), std::move(values), true);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  /// Direct write access; used by optimizers and finite differencing. Does not
  /// invalidate graphs already built from this tensor.
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  bool has_grad() const;
  /// Accumulated gradient; zeros when nothing has flowed back yet.
  std::vector<double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  const char* op_name() const;
  std::uint64_t sequence() const;
  std::size_t parent_count() const;
  Tensor parent(std::size_t i) const;

  /// Same-node identity (aliasing), not value equality.
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  /// Fresh leaf with copied values and no history.
  Tensor detach() const;

  detail::Node& node() const { return *node_; }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// While alive on a thread, operations on that thread record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Seeds d(root)/d(root) = 1 and accumulates gradients into every reachable
/// node that requires them. `root` must hold exactly one value.
void backward(const Tensor& root);

/// Nodes reachable from `root` that require gradients, in the order backward()
/// visits them.
std::vector<Tensor> backward_order(const Tensor& root);

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// ---- elementwise, same shape ----------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log1p(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
/// log(sigmoid(x)), stable for large |x|.
Tensor log_sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor square(const Tensor& a);
/// Adds a constant (non-differentiable) array of the same shape.
Tensor add_constant(const Tensor& a, std::span<const double> offsets);

// ---- explicit mixed shapes ------------------------------------------------

/// x[m x n] + b[n] added to every row.
Tensor add_bias(const Tensor& x, const Tensor& bias);
/// x * s where s holds a single value.
Tensor mul_scalar(const Tensor& x, const Tensor& s);
/// x + s where s holds a single value.
Tensor add_scalar(const Tensor& x, const Tensor& s);
/// Repeats a 1 x n row `count` times.
Tensor tile_rows(const Tensor& row, std::size_t count);
/// w[L x 1] and rows[L x d] -> [d] = sum_i w_i * rows_i.
Tensor weighted_sum(const Tensor& weights, const Tensor& rows);

// ---- structural -----------------------------------------------------------

/// Rank-2 tensors along axis 0 (stack rows) or 1 (join columns); rank-1
/// tensors along axis 0.
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor reshape(const Tensor& a, Shape shape);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor row(const Tensor& a, std::size_t index);
/// Rows of `table` selected by index; gradient scatters back.
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices);

// ---- reductions -----------------------------------------------------------

/// Rank-2 sum over `axis`, producing a rank-1 tensor. Rank-1 input with axis 0
/// produces shape {1}.
Tensor sum(const Tensor& a, std::size_t axis);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor logsumexp_all(const Tensor& a);

// ---- normalization --------------------------------------------------------

/// Softmax along `axis` with max subtraction.
Tensor softmax(const Tensor& x, std::size_t axis);

inline constexpr double kLayerNormEpsilon = 1e-5;

/// Per-row normalization of x[m x d] followed by gain[d] and bias[d].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

/// Inverted dropout. Identity when `training` is false or rate is 0.
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

// ---- verification ---------------------------------------------------------

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct GradCheckResult {
  double max_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
};

enum class DiffMethod {
  central,     // (f(h) - f(-h)) / 2h
  five_point,  // fourth-order stencil over +-h, +-2h
  ridders,     // extrapolation over shrinking central differences, run from
               // h and h/10; the h/10 result wins when the two disagree
};

struct GradCheckOptions {
  /// Step for the fixed stencils; initial step for Ridders' method.
  double step = 1e-5;
  DiffMethod method = DiffMethod::central;
  /// Below this magnitude (max of analytic and numeric) the error is measured
  /// as an absolute difference instead of a relative one.
  double absolute_floor = 1e-8;
  /// Called after the analytic backward pass and before comparison. Lets
  /// tests tamper with gradients to prove the harness notices.
  std::function<void(std::vector<NamedTensor>&)> after_backward;
};

/// Compares the autodiff gradient of scalar `f` against central differences
/// for every coordinate of every parameter.
GradCheckResult grad_check(const std::function<Tensor()>& f,
                           std::vector<NamedTensor> params,
                           const GradCheckOptions& options = {});

GradCheckResult grad_check(const std::function<Tensor()>& f,
                           const std::vector<Tensor>& params,
                           double step = 1e-5);

}  // namespace cta
