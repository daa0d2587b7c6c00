#include "cta/model.hpp"

#include <cmath>

#include <fmt/format.h>

#include "cta/error.hpp"

namespace cta {

namespace {

const ModelConfig& validated(const ModelConfig& cfg) {
  cfg.validate();
  return cfg;
}

AttentionConfig attention_config(const ModelConfig& cfg) {
  return {cfg.d_in, cfg.d_a, cfg.heads, cfg.blocks};
}

ContextConfig context_config(const ModelConfig& cfg) {
  return {cfg.d_in, cfg.d_r, parse_kernel_spec(cfg.kernels).size(), cfg.context,
          cfg.context_attr_dim};
}

}  // namespace

std::string to_string(AlphaMode mode) {
  return mode == AlphaMode::flat ? "flat" : "self_attention";
}

AlphaMode parse_alpha_mode(const std::string& s) {
  if (s == "self_attention") return AlphaMode::self_attention;
  if (s == "flat") return AlphaMode::flat;
  throw ConfigError("unknown alpha mode '" + s + "' (self_attention|flat)");
}

std::string to_string(IntervalTransform t) {
  return t == IntervalTransform::log1p ? "log1p" : "none";
}

IntervalTransform parse_interval_transform(const std::string& s) {
  if (s == "none") return IntervalTransform::none;
  if (s == "log1p") return IntervalTransform::log1p;
  throw ConfigError("unknown interval transform '" + s + "' (none|log1p)");
}

void ModelConfig::validate() const {
  if (num_items == 0) throw ConfigError("model needs at least one item");
  if (window == 0) throw ConfigError("window length must be at least 1");
  if (blocks == 0 && alpha == AlphaMode::self_attention) {
    throw ConfigError("self-attention needs at least one block");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError(fmt::format("dropout {} outside [0, 1)", dropout));
  }
  if (!share_embeddings && d_out == 0) throw ConfigError("output width must be positive");
  AttentionConfig{d_in, d_a, heads, blocks}.validate();
  ContextConfig{d_in, d_r, parse_kernel_spec(kernels).size(), context, context_attr_dim}
      .validate();
}

CtaModel::CtaModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(validated(cfg)),
      embedding_(Initializer(seed).normal("embedding.input", {cfg.num_items + 1, cfg.d_in},
                                          1.0 / std::sqrt(static_cast<double>(cfg.d_in)))),
      encoder_(attention_config(cfg), Initializer(seed)),
      alpha_head_(cfg.d_in, Initializer(seed)),
      kernels_(parse_kernel_spec(cfg.kernels), Initializer(seed)),
      context_(context_config(cfg), Initializer(seed)),
      output_(cfg.d_in, cfg.output_width(), cfg.num_items + 1,
              cfg.share_embeddings ? std::optional<Tensor>(embedding_) : std::nullopt,
              Initializer(seed)) {
  params_.push_back({"embedding.input", embedding_});
  if (cfg_.alpha == AlphaMode::self_attention) {
    encoder_.collect(params_);
    alpha_head_.collect(params_);
  }
  kernels_.collect(params_);
  context_.collect(params_);
  output_.collect(params_);
}

ForwardTrace CtaModel::forward(const WindowSample& sample, const ForwardContext& ctx,
                               const std::optional<Tensor>& attributes) const {
  const std::size_t l = sample.length();
  if (l != cfg_.window || sample.intervals.size() != l || sample.pad_mask.size() != l) {
    throw DimensionError(fmt::format("window sample of length {} for a model with L={}", l,
                                     cfg_.window));
  }
  if (sample.pad_mask.back()) throw InputError("most recent window position is padding");
  for (auto item : sample.item_indices) {
    if (item > cfg_.num_items) {
      throw DimensionError(fmt::format("item index {} outside vocabulary of {}", item,
                                       cfg_.num_items));
    }
  }

  ForwardTrace t;
  t.x = gather_rows(embedding_, sample.item_indices);

  std::vector<double> intervals = sample.intervals;
  for (std::size_t i = 0; i < l; ++i) {
    if (sample.pad_mask[i]) intervals[i] = 0.0;
    if (!(intervals[i] >= 0.0)) {
      throw InputError(fmt::format("negative interval {} at position {}", intervals[i], i));
    }
    if (cfg_.interval_transform == IntervalTransform::log1p) intervals[i] = std::log1p(intervals[i]);
  }
  t.intervals = Tensor({l, 1}, std::move(intervals));

  if (cfg_.alpha == AlphaMode::flat) {
    t.alpha = flat_alpha(l, sample.pad_mask);
  } else {
    const Tensor h = encoder_.encode(t.x, sample.pad_mask, ctx);
    t.alpha = alpha_head_.scores(h, row(t.x, l - 1), sample.pad_mask);
  }
  t.beta = kernels_.evaluate(t.intervals);
  t.p = context_.distribution(t.x, sample.pad_mask, ctx, attributes);
  auto fused = fuse(t.alpha, t.beta, t.p, sample.pad_mask);
  t.beta_c = fused.beta_c;
  t.gamma = fused.gamma;
  t.representation = output_.represent(t.gamma, t.x, ctx);
  return t;
}

Tensor CtaModel::candidate_scores(const ForwardTrace& trace,
                                  std::span<const std::size_t> items) const {
  return output_.scores(trace.representation, items);
}

std::vector<double> CtaModel::score_all(const WindowSample& sample) const {
  NoGradGuard no_grad;
  const ForwardTrace t = forward(sample, ForwardContext{});
  return output_.score_all(t.representation);
}

Tensor CtaModel::parameter(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw LookupError("no parameter named '" + name + "'");
}

std::size_t CtaModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

void CtaModel::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

std::vector<std::vector<double>> CtaModel::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

void CtaModel::restore(const std::vector<std::vector<double>>& values) {
  if (values.size() != params_.size()) throw DimensionError("snapshot does not match model");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto dst = params_[i].tensor.mutable_values();
    if (values[i].size() != dst.size()) {
      throw DimensionError("snapshot tensor size mismatch for " + params_[i].name);
    }
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

}  // namespace cta
