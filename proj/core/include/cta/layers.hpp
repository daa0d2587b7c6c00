#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cta/rng.hpp"
#include "cta/tensor.hpp"

namespace cta {

/// Deterministic parameter initialization. Each tensor draws from its own
/// stream keyed by (seed, name), so values do not depend on creation order.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Normal(0, sqrt(2 / fan_in)), the rectifier-keyed Kaiming scheme.
  Tensor kaiming(const std::string& name, Shape shape, std::size_t fan_in) const;
  Tensor normal(const std::string& name, Shape shape, double stddev) const;
  Tensor uniform(const std::string& name, Shape shape, double low, double high) const;
  Tensor zeros(Shape shape) const { return Tensor::zeros(std::move(shape), true); }
  Tensor ones(Shape shape) const { return Tensor::full(std::move(shape), 1.0, true); }

 private:
  Rng stream(const std::string& name) const;

  std::uint64_t seed_;
};

/// Per-forward settings: dropout mode and the random stream for masks.
struct ForwardContext {
  bool training = false;
  double dropout_rate = 0.0;
  Rng* rng = nullptr;

  Tensor dropout(const Tensor& x) const;
};

/// Row-wise affine map x W + b.
struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]

  static Linear kaiming(const Initializer& init, const std::string& name, std::size_t in,
                        std::size_t out);
  Tensor operator()(const Tensor& x) const { return add_bias(matmul(x, weight), bias); }
  void collect(const std::string& name, std::vector<NamedTensor>& out) const;
};

/// Additive logit offsets that give padded positions zero softmax weight.
inline constexpr double kMaskedLogit = -1e9;

/// [rows x L] offsets: kMaskedLogit in every column whose position is padded.
std::vector<double> key_mask_offsets(const std::vector<bool>& pad_mask, std::size_t rows);

/// [L x 1] offsets: kMaskedLogit at padded positions.
std::vector<double> position_mask_offsets(const std::vector<bool>& pad_mask);

}  // namespace cta
