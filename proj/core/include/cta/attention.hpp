#pragma once

// Content-based importance: stacked multi-head self-attention blocks over the
// window, then a bi-linear attention of every encoded position against the
// most recent item's input embedding.

#include <string>
#include <vector>

#include "cta/layers.hpp"
#include "cta/tensor.hpp"

namespace cta {

struct AttentionConfig {
  std::size_t d_in = 32;
  std::size_t d_a = 32;
  std::size_t heads = 2;
  std::size_t blocks = 2;

  void validate() const;
  std::size_t head_width() const { return d_a / heads; }
};

struct AttentionHeadParams {
  Tensor w_q;  // [d_in x d_a/heads]
  Tensor w_k;
  Tensor w_v;
};

struct AttentionBlockParams {
  std::vector<AttentionHeadParams> heads;
  Tensor w_o;           // [d_a x d_a]
  Linear feed_forward;  // d_a -> d_in
  Tensor ln_gain;       // [d_in]
  Tensor ln_bias;
};

class SelfAttentionEncoder {
 public:
  SelfAttentionEncoder(const AttentionConfig& cfg, const Initializer& init,
                       const std::string& prefix = "alpha");

  /// x[L x d_in] -> H[L x d_in]. Padded keys get no attention weight. Throws
  /// InputError when every position is padded.
  Tensor encode(const Tensor& x, const std::vector<bool>& pad_mask,
                const ForwardContext& ctx) const;

  const AttentionConfig& config() const { return cfg_; }
  const std::vector<AttentionBlockParams>& blocks() const { return blocks_; }
  std::vector<AttentionBlockParams>& blocks() { return blocks_; }
  void collect(std::vector<NamedTensor>& out) const;

 private:
  Tensor block_forward(const AttentionBlockParams& block, const Tensor& h,
                       const std::vector<double>& key_offsets,
                       const ForwardContext& ctx) const;

  AttentionConfig cfg_;
  std::string prefix_;
  std::vector<AttentionBlockParams> blocks_;
};

/// alpha = softmax((H W_q)(x_last W_k)^T / sqrt(d_in)) over real positions.
class AlphaHead {
 public:
  AlphaHead(std::size_t d_in, const Initializer& init, const std::string& prefix = "alpha");

  /// H[L x d_in], x_last[1 x d_in] -> alpha[L x 1].
  Tensor scores(const Tensor& h, const Tensor& x_last, const std::vector<bool>& pad_mask) const;

  Tensor& w_q() { return w_q_; }
  Tensor& w_k() { return w_k_; }
  void collect(std::vector<NamedTensor>& out) const;

 private:
  std::size_t d_in_;
  std::string prefix_;
  Tensor w_q_;
  Tensor w_k_;
};

/// Uniform weights over real positions; the "flat attention" ablation.
Tensor flat_alpha(std::size_t length, const std::vector<bool>& pad_mask);

}  // namespace cta
