#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cta/attention.hpp"
#include "cta/context.hpp"
#include "cta/data.hpp"
#include "cta/kernels.hpp"
#include "cta/layers.hpp"

namespace cta {

enum class AlphaMode { self_attention, flat };
enum class IntervalTransform { none, log1p };

std::string to_string(AlphaMode mode);
AlphaMode parse_alpha_mode(const std::string& s);
std::string to_string(IntervalTransform t);
IntervalTransform parse_interval_transform(const std::string& s);

struct ModelConfig {
  std::size_t num_items = 0;  // N, excluding the padding item
  std::size_t d_in = 32;
  std::size_t d_a = 32;
  std::size_t heads = 2;
  std::size_t blocks = 2;
  std::size_t d_r = 8;
  std::size_t d_out = 32;  // ignored when embeddings are shared
  std::size_t window = 8;
  std::string kernels = "exp5";
  bool share_embeddings = true;
  AlphaMode alpha = AlphaMode::self_attention;
  ContextMode context = ContextMode::bidirectional;
  IntervalTransform interval_transform = IntervalTransform::none;
  TimeUnit time_unit = TimeUnit::hours;
  double dropout = 0.2;
  std::size_t context_attr_dim = 0;

  void validate() const;
  std::size_t output_width() const { return share_embeddings ? d_in : d_out; }
};

/// Every intermediate of one forward pass, for losses and inspection.
struct ForwardTrace {
  Tensor x;               // [L x d_in] input embeddings
  Tensor intervals;       // [L x 1] after the interval transform
  Tensor alpha;           // [L x 1]
  Tensor beta;            // [L x K]
  Tensor p;               // [L x K]
  Tensor beta_c;          // [L x 1]
  Tensor gamma;           // [L x 1]
  Tensor representation;  // [1 x d_out]
};

/// The full alpha -> beta -> gamma pipeline with its parameters.
class CtaModel {
 public:
  CtaModel(const ModelConfig& cfg, std::uint64_t seed);

  CtaModel(const CtaModel&) = delete;
  CtaModel& operator=(const CtaModel&) = delete;
  CtaModel(CtaModel&&) = default;
  CtaModel& operator=(CtaModel&&) = default;

  const ModelConfig& config() const { return cfg_; }

  ForwardTrace forward(const WindowSample& sample, const ForwardContext& ctx,
                       const std::optional<Tensor>& attributes = std::nullopt) const;

  /// Scores [k] for the given items from a finished trace.
  Tensor candidate_scores(const ForwardTrace& trace, std::span<const std::size_t> items) const;

  /// Inference-mode scores for all N + 1 indices (padding at -infinity).
  std::vector<double> score_all(const WindowSample& sample) const;

  /// Learnable tensors, each exactly once, in a stable order with stable
  /// names.
  const std::vector<NamedTensor>& parameters() const { return params_; }
  Tensor parameter(const std::string& name) const;  // throws LookupError
  std::size_t parameter_count() const;
  void zero_grad();

  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& values);

  Tensor& input_embedding() { return embedding_; }
  SelfAttentionEncoder& encoder() { return encoder_; }
  AlphaHead& alpha_head() { return alpha_head_; }
  KernelBank& kernel_bank() { return kernels_; }
  ContextEncoder& context() { return context_; }
  OutputHead& output() { return output_; }

 private:
  ModelConfig cfg_;
  Tensor embedding_;  // [N+1 x d_in]; row 0 is the padding item
  SelfAttentionEncoder encoder_;
  AlphaHead alpha_head_;
  KernelBank kernels_;
  ContextEncoder context_;
  OutputHead output_;
  std::vector<NamedTensor> params_;
};

}  // namespace cta
