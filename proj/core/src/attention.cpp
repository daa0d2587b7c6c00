#include "cta/attention.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "cta/error.hpp"

namespace cta {

namespace {

void require_real_position(const std::vector<bool>& pad_mask, std::size_t length) {
  if (pad_mask.size() != length) {
    throw DimensionError(fmt::format("pad mask has {} entries for {} positions",
                                     pad_mask.size(), length));
  }
  if (std::all_of(pad_mask.begin(), pad_mask.end(), [](bool p) { return p; })) {
    throw InputError("window has no real positions");
  }
}

}  // namespace

void AttentionConfig::validate() const {
  if (d_in == 0 || d_a == 0 || heads == 0) {
    throw ConfigError("attention sizes must be positive");
  }
  if (d_a % heads != 0) {
    throw ConfigError(fmt::format("attention width {} is not divisible by {} heads", d_a, heads));
  }
  if (d_in < 2) throw ConfigError("input embedding width must be at least 2");
}

SelfAttentionEncoder::SelfAttentionEncoder(const AttentionConfig& cfg, const Initializer& init,
                                           const std::string& prefix)
    : cfg_(cfg), prefix_(prefix) {
  cfg_.validate();
  const std::size_t dk = cfg_.head_width();
  for (std::size_t j = 0; j < cfg_.blocks; ++j) {
    const std::string base = fmt::format("{}.block{}", prefix_, j);
    AttentionBlockParams block;
    for (std::size_t h = 0; h < cfg_.heads; ++h) {
      const std::string hb = fmt::format("{}.head{}", base, h);
      block.heads.push_back({init.kaiming(hb + ".w_q", {cfg_.d_in, dk}, cfg_.d_in),
                             init.kaiming(hb + ".w_k", {cfg_.d_in, dk}, cfg_.d_in),
                             init.kaiming(hb + ".w_v", {cfg_.d_in, dk}, cfg_.d_in)});
    }
    block.w_o = init.kaiming(base + ".w_o", {cfg_.d_a, cfg_.d_a}, cfg_.d_a);
    block.feed_forward = Linear::kaiming(init, base + ".ff", cfg_.d_a, cfg_.d_in);
    block.ln_gain = init.ones({cfg_.d_in});
    block.ln_bias = init.zeros({cfg_.d_in});
    blocks_.push_back(std::move(block));
  }
}

Tensor SelfAttentionEncoder::block_forward(const AttentionBlockParams& block, const Tensor& h,
                                           const std::vector<double>& key_offsets,
                                           const ForwardContext& ctx) const {
  const double inv_temp = 1.0 / std::sqrt(static_cast<double>(cfg_.head_width()));
  std::vector<Tensor> heads;
  heads.reserve(block.heads.size());
  for (const auto& head : block.heads) {
    const Tensor q = matmul(h, head.w_q);
    const Tensor k = matmul(h, head.w_k);
    const Tensor v = matmul(h, head.w_v);
    const Tensor logits = add_constant(scale(matmul(q, transpose(k)), inv_temp), key_offsets);
    heads.push_back(matmul(softmax(logits, 1), v));
  }
  const Tensor z = matmul(heads.size() == 1 ? heads[0] : concat(heads, 1), block.w_o);
  const Tensor f = ctx.dropout(relu(block.feed_forward(z)));
  return layer_norm(add(h, f), block.ln_gain, block.ln_bias);
}

Tensor SelfAttentionEncoder::encode(const Tensor& x, const std::vector<bool>& pad_mask,
                                    const ForwardContext& ctx) const {
  if (x.rank() != 2 || x.cols() != cfg_.d_in) {
    throw DimensionError(fmt::format("encode: expected [L x {}], got {}", cfg_.d_in,
                                     shape_string(x.shape())));
  }
  require_real_position(pad_mask, x.rows());
  const auto offsets = key_mask_offsets(pad_mask, x.rows());
  Tensor h = x;
  for (const auto& block : blocks_) h = block_forward(block, h, offsets, ctx);
  return h;
}

void SelfAttentionEncoder::collect(std::vector<NamedTensor>& out) const {
  for (std::size_t j = 0; j < blocks_.size(); ++j) {
    const auto& block = blocks_[j];
    const std::string base = fmt::format("{}.block{}", prefix_, j);
    for (std::size_t h = 0; h < block.heads.size(); ++h) {
      const std::string hb = fmt::format("{}.head{}", base, h);
      out.push_back({hb + ".w_q", block.heads[h].w_q});
      out.push_back({hb + ".w_k", block.heads[h].w_k});
      out.push_back({hb + ".w_v", block.heads[h].w_v});
    }
    out.push_back({base + ".w_o", block.w_o});
    block.feed_forward.collect(base + ".ff", out);
    out.push_back({base + ".ln_gain", block.ln_gain});
    out.push_back({base + ".ln_bias", block.ln_bias});
  }
}

AlphaHead::AlphaHead(std::size_t d_in, const Initializer& init, const std::string& prefix)
    : d_in_(d_in),
      prefix_(prefix),
      w_q_(init.kaiming(prefix + ".final.w_q", {d_in, d_in}, d_in)),
      w_k_(init.kaiming(prefix + ".final.w_k", {d_in, d_in}, d_in)) {}

Tensor AlphaHead::scores(const Tensor& h, const Tensor& x_last,
                         const std::vector<bool>& pad_mask) const {
  if (h.rank() != 2 || h.cols() != d_in_ || x_last.size() != d_in_) {
    throw DimensionError(fmt::format("alpha: H {} / x_last {} do not match width {}",
                                     shape_string(h.shape()), shape_string(x_last.shape()),
                                     d_in_));
  }
  require_real_position(pad_mask, h.rows());
  const Tensor query = matmul(h, w_q_);
  const Tensor key = matmul(reshape(x_last, {1, d_in_}), w_k_);
  const Tensor logits = scale(matmul(query, transpose(key)),
                              1.0 / std::sqrt(static_cast<double>(d_in_)));
  return softmax(add_constant(logits, position_mask_offsets(pad_mask)), 0);
}

void AlphaHead::collect(std::vector<NamedTensor>& out) const {
  out.push_back({prefix_ + ".final.w_q", w_q_});
  out.push_back({prefix_ + ".final.w_k", w_k_});
}

Tensor flat_alpha(std::size_t length, const std::vector<bool>& pad_mask) {
  require_real_position(pad_mask, length);
  const auto real = static_cast<double>(std::count(pad_mask.begin(), pad_mask.end(), false));
  std::vector<double> v(length, 0.0);
  for (std::size_t i = 0; i < length; ++i)
    if (!pad_mask[i]) v[i] = 1.0 / real;
  return Tensor({length, 1}, std::move(v));
}

}  // namespace cta
