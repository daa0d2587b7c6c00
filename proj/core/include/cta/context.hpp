#pragma once

// Contextual mixing: a bidirectional gated-recurrent encoder turns the window
// into per-event context features C, a feed-forward layer maps C to a
// distribution P over the K temporal kernels, and the kernel-mixed temporal
// score beta_c = rowsum(beta * P) reweights alpha into the final attention
// gamma = softmax(alpha * beta_c). The output head turns gamma into item
// scores.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cta/layers.hpp"
#include "cta/tensor.hpp"

namespace cta {

enum class ContextMode {
  bidirectional,  // P(. | C) from the recurrent encoder (default)
  global,         // one learned distribution shared by every position
  local,          // P(. | x_i) from each event's embedding alone
};

std::string to_string(ContextMode mode);
ContextMode parse_context_mode(const std::string& s);

/// Update/reset-gated recurrent cell with zero initial state.
struct GruCell {
  Tensor w_z, w_r, w_n;  // [d_in x hidden]
  Tensor u_z, u_r, u_n;  // [hidden x hidden]
  Tensor b_z, b_r, b_n;  // [hidden]

  static GruCell create(const Initializer& init, const std::string& name, std::size_t d_in,
                        std::size_t hidden);
  std::size_t hidden() const { return u_z.rows(); }
  /// x[1 x d_in], h[1 x hidden] -> next h[1 x hidden].
  Tensor step(const Tensor& x, const Tensor& h) const;
  void collect(const std::string& name, std::vector<NamedTensor>& out) const;
};

struct ContextConfig {
  std::size_t d_in = 32;
  std::size_t d_r = 8;  // both directions together
  std::size_t kernels = 5;
  ContextMode mode = ContextMode::bidirectional;
  std::size_t attr_dim = 0;  // width of optional per-event attributes

  void validate() const;
};

class ContextEncoder {
 public:
  ContextEncoder(const ContextConfig& cfg, const Initializer& init,
                 const std::string& prefix = "gamma");

  /// C[L x (d_r + attr_dim)]: forward and backward states over the real
  /// positions, zero rows at pads, then `attributes` columns when given.
  Tensor context_features(const Tensor& x, const std::vector<bool>& pad_mask,
                          const ForwardContext& ctx,
                          const std::optional<Tensor>& attributes = std::nullopt) const;

  /// P = softmax(F(C)) row-wise, P[L x K].
  Tensor mixture(const Tensor& c, const ForwardContext& ctx) const;

  /// Kernel distribution for the configured mode.
  Tensor distribution(const Tensor& x, const std::vector<bool>& pad_mask,
                      const ForwardContext& ctx,
                      const std::optional<Tensor>& attributes = std::nullopt) const;

  const ContextConfig& config() const { return cfg_; }
  GruCell& forward_cell() { return forward_; }
  GruCell& backward_cell() { return backward_; }
  Linear& mixture_layer() { return mixture_; }
  Linear& local_layer() { return local_; }
  Tensor& global_logits() { return global_; }
  void collect(std::vector<NamedTensor>& out) const;

 private:
  ContextConfig cfg_;
  std::string prefix_;
  GruCell forward_;
  GruCell backward_;
  Linear mixture_;  // (d_r + attr_dim) -> K
  Linear local_;    // d_in -> K
  Tensor global_;   // [1 x K]
};

struct FusedAttention {
  Tensor beta_c;  // [L x 1]
  Tensor gamma;   // [L x 1]
};

/// beta_c = rowsum(beta * P); gamma = softmax(alpha * beta_c) with pads at 0.
FusedAttention fuse(const Tensor& alpha, const Tensor& beta, const Tensor& p,
                    const std::vector<bool>& pad_mask);

/// x_hat = F_out(gamma^T X); item scores are inner products with the output
/// embeddings.
class OutputHead {
 public:
  /// With `shared_embedding` set, scores use that tensor (tied weights) and
  /// d_out equals its width; otherwise a separate [N+1 x d_out] table is made.
  OutputHead(std::size_t d_in, std::size_t d_out, std::size_t vocab_rows,
             const std::optional<Tensor>& shared_embedding, const Initializer& init,
             const std::string& prefix = "output");

  /// gamma[L x 1], x[L x d_in] -> x_hat[1 x d_out].
  Tensor represent(const Tensor& gamma, const Tensor& x, const ForwardContext& ctx) const;

  /// Scores for the listed items, shape [k].
  Tensor scores(const Tensor& x_hat, std::span<const std::size_t> items) const;

  /// Scores for every item; index 0 (padding) is -infinity.
  std::vector<double> score_all(const Tensor& x_hat) const;

  bool shared() const { return shared_; }
  const Tensor& embedding() const { return embedding_; }
  Linear& projection() { return projection_; }
  void collect(std::vector<NamedTensor>& out) const;

 private:
  std::string prefix_;
  bool shared_;
  Linear projection_;
  Tensor embedding_;
};

}  // namespace cta
