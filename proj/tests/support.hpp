#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cta/data.hpp"
#include "cta/rng.hpp"
#include "cta/tensor.hpp"

namespace cta::test {

inline Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true, double scale = 1.0) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = scale * standard_normal(rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

// Values kept away from 0 so kinked ops (relu) are differentiable within the
// finite-difference stencil.
inline Tensor away_from_zero(Shape shape, Rng& rng) {
  Tensor t = random_tensor(std::move(shape), rng);
  for (double& v : t.mutable_values()) v = v >= 0 ? v + 0.05 : v - 0.05;
  return t;
}

struct OpCase {
  const char* name;
  std::function<Tensor(std::vector<Tensor>&)> build;
  std::vector<Shape> inputs;
};

inline const std::vector<OpCase>& op_cases() {
  static const std::vector<OpCase> cases = {
    {"matmul", [](auto& t) { return matmul(t[0], t[1]); }, {{5, 8}, {8, 3}}},
    {"transpose", [](auto& t) { return transpose(t[0]); }, {{4, 7}}},
    {"add", [](auto& t) { return add(t[0], t[1]); }, {{3, 4}, {3, 4}}},
    {"sub", [](auto& t) { return sub(t[0], t[1]); }, {{3, 4}, {3, 4}}},
    {"mul", [](auto& t) { return mul(t[0], t[1]); }, {{8, 8}, {8, 8}}},
    {"scale", [](auto& t) { return scale(t[0], -1.7); }, {{2, 5}}},
    {"neg", [](auto& t) { return neg(t[0]); }, {{6}}},
    {"exp", [](auto& t) { return exp(t[0]); }, {{3, 3}}},
    {"log1p", [](auto& t) { return log1p(square(t[0])); }, {{3, 3}}},
    {"relu", [](auto& t) { return relu(t[0]); }, {{4, 6}}},
    {"sigmoid", [](auto& t) { return sigmoid(t[0]); }, {{4, 6}}},
    {"log_sigmoid", [](auto& t) { return log_sigmoid(t[0]); }, {{4, 6}}},
    {"tanh", [](auto& t) { return tanh(t[0]); }, {{4, 6}}},
    {"square", [](auto& t) { return square(t[0]); }, {{7}}},
    {"add_bias", [](auto& t) { return add_bias(t[0], t[1]); }, {{4, 5}, {5}}},
    {"mul_scalar", [](auto& t) { return mul_scalar(t[0], t[1]); }, {{3, 2}, {1}}},
    {"add_scalar", [](auto& t) { return add_scalar(t[0], t[1]); }, {{3, 2}, {1}}},
    {"tile_rows", [](auto& t) { return tile_rows(t[0], 4); }, {{1, 5}}},
    {"weighted_sum", [](auto& t) { return weighted_sum(t[0], t[1]); }, {{6, 1}, {6, 4}}},
    {"concat0", [](auto& t) { return concat({t[0], t[1]}, 0); }, {{2, 3}, {4, 3}}},
    {"concat1", [](auto& t) { return concat({t[0], t[1]}, 1); }, {{3, 2}, {3, 5}}},
    {"reshape", [](auto& t) { return reshape(t[0], {6, 2}); }, {{3, 4}}},
    {"slice_rows", [](auto& t) { return slice_rows(t[0], 1, 3); }, {{5, 4}}},
    {"slice_cols", [](auto& t) { return slice_cols(t[0], 2, 2); }, {{3, 6}}},
    {"row", [](auto& t) { return row(t[0], 2); }, {{4, 3}}},
    {"gather_rows",
     [](auto& t) {
       const std::vector<std::size_t> idx{3, 0, 3, 1};
       return gather_rows(t[0], idx);
     },
     {{5, 4}}},
    {"sum0", [](auto& t) { return sum(t[0], 0); }, {{4, 5}}},
    {"sum1", [](auto& t) { return sum(t[0], 1); }, {{4, 5}}},
    {"sum_all", [](auto& t) { return sum_all(t[0]); }, {{8, 8}}},
    {"mean_all", [](auto& t) { return mean_all(t[0]); }, {{3, 5}}},
    {"logsumexp", [](auto& t) { return logsumexp_all(t[0]); }, {{9}}},
    {"softmax1d", [](auto& t) { return softmax(t[0], 0); }, {{6}}},
    {"softmax_rows", [](auto& t) { return softmax(t[0], 1); }, {{4, 5}}},
    {"softmax_cols", [](auto& t) { return softmax(t[0], 0); }, {{4, 5}}},
    {"layer_norm", [](auto& t) { return layer_norm(t[0], t[1], t[2]); }, {{3, 8}, {8}, {8}}},
    {"add_constant",
     [](auto& t) {
       const std::vector<double> c{1, -2, 3, 0, 0.5, 9};
       return add_constant(t[0], c);
     },
     {{2, 3}}},
  };
  return cases;
}

// Ridders check of sum(w * op(inputs)) with a fixed random weight w, so every
// output coordinate gets a distinct weight.
inline GradCheckResult check_op(const OpCase& c, std::uint64_t seed) {
  Rng rng(derive_seed({seed, hash_string(c.name)}));
  std::vector<Tensor> inputs;
  std::vector<NamedTensor> named;
  for (std::size_t i = 0; i < c.inputs.size(); ++i) {
    inputs.push_back(away_from_zero(c.inputs[i], rng));
    named.push_back({std::string(c.name) + "." + std::to_string(i), inputs.back()});
  }
  GradCheckOptions o;
  o.method = DiffMethod::ridders;
  o.step = 1e-3;
  return grad_check(
      [&] {
        const Tensor y = c.build(inputs);
        Rng wr(99);
        return sum_all(mul(y, random_tensor(y.shape(), wr, false)));
      },
      named, o);
}

inline std::vector<double> to_vector(const Tensor& t) {
  return {t.values().begin(), t.values().end()};
}

// Plain row-major helpers for straight-line oracles.
using Mat = std::vector<std::vector<double>>;

inline Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

inline Mat mat_mul(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline Mat mat_t(const Mat& a) {
  Mat t(a[0].size(), std::vector<double>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) t[j][i] = a[i][j];
  return t;
}

inline std::vector<double> softmax_vec(std::vector<double> x) {
  double m = x[0];
  for (double v : x) m = std::max(m, v);
  double s = 0.0;
  for (double& v : x) s += (v = std::exp(v - m));
  for (double& v : x) v /= s;
  return x;
}

inline WindowSample window_of(std::vector<std::size_t> items, std::vector<double> intervals,
                              std::size_t target) {
  WindowSample w;
  w.item_indices = std::move(items);
  w.intervals = std::move(intervals);
  w.pad_mask.resize(w.item_indices.size());
  for (std::size_t i = 0; i < w.item_indices.size(); ++i) w.pad_mask[i] = w.item_indices[i] == 0;
  w.target_item = target;
  return w;
}

}  // namespace cta::test
