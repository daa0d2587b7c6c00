#include "cta/layers.hpp"

#include <cmath>

#include "cta/error.hpp"

namespace cta {

Rng Initializer::stream(const std::string& name) const {
  return Rng(derive_seed({seed_, hash_string(name)}));
}

Tensor Initializer::kaiming(const std::string& name, Shape shape, std::size_t fan_in) const {
  return normal(name, std::move(shape), std::sqrt(2.0 / static_cast<double>(fan_in)));
}

Tensor Initializer::normal(const std::string& name, Shape shape, double stddev) const {
  Rng rng = stream(name);
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = stddev * standard_normal(rng);
  return Tensor::parameter(std::move(shape), std::move(v));
}

Tensor Initializer::uniform(const std::string& name, Shape shape, double low,
                            double high) const {
  Rng rng = stream(name);
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = low + (high - low) * uniform01(rng);
  return Tensor::parameter(std::move(shape), std::move(v));
}

Tensor ForwardContext::dropout(const Tensor& x) const {
  if (!training || dropout_rate == 0.0) return x;
  if (rng == nullptr) throw ConfigError("dropout in training mode needs a random stream");
  return cta::dropout(x, dropout_rate, true, *rng);
}

Linear Linear::kaiming(const Initializer& init, const std::string& name, std::size_t in,
                       std::size_t out) {
  return {init.kaiming(name + ".weight", {in, out}, in), init.zeros({out})};
}

void Linear::collect(const std::string& name, std::vector<NamedTensor>& out) const {
  out.push_back({name + ".weight", weight});
  out.push_back({name + ".bias", bias});
}

std::vector<double> key_mask_offsets(const std::vector<bool>& pad_mask, std::size_t rows) {
  const std::size_t l = pad_mask.size();
  std::vector<double> offsets(rows * l, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < l; ++j)
      if (pad_mask[j]) offsets[i * l + j] = kMaskedLogit;
  return offsets;
}

std::vector<double> position_mask_offsets(const std::vector<bool>& pad_mask) {
  std::vector<double> offsets(pad_mask.size(), 0.0);
  for (std::size_t i = 0; i < pad_mask.size(); ++i)
    if (pad_mask[i]) offsets[i] = kMaskedLogit;
  return offsets;
}

}  // namespace cta
