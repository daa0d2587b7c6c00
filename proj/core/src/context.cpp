#include "cta/context.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "cta/error.hpp"

namespace cta {

std::string to_string(ContextMode mode) {
  switch (mode) {
    case ContextMode::bidirectional: return "bidirectional";
    case ContextMode::global: return "global";
    case ContextMode::local: return "local";
  }
  return "bidirectional";
}

ContextMode parse_context_mode(const std::string& s) {
  if (s == "bidirectional") return ContextMode::bidirectional;
  if (s == "global") return ContextMode::global;
  if (s == "local") return ContextMode::local;
  throw ConfigError("unknown context mode '" + s + "' (bidirectional|global|local)");
}

// ---- GruCell --------------------------------------------------------------

GruCell GruCell::create(const Initializer& init, const std::string& name, std::size_t d_in,
                        std::size_t hidden) {
  GruCell c;
  c.w_z = init.kaiming(name + ".w_z", {d_in, hidden}, d_in);
  c.w_r = init.kaiming(name + ".w_r", {d_in, hidden}, d_in);
  c.w_n = init.kaiming(name + ".w_n", {d_in, hidden}, d_in);
  c.u_z = init.kaiming(name + ".u_z", {hidden, hidden}, hidden);
  c.u_r = init.kaiming(name + ".u_r", {hidden, hidden}, hidden);
  c.u_n = init.kaiming(name + ".u_n", {hidden, hidden}, hidden);
  c.b_z = init.zeros({hidden});
  c.b_r = init.zeros({hidden});
  c.b_n = init.zeros({hidden});
  return c;
}

Tensor GruCell::step(const Tensor& x, const Tensor& h) const {
  const Tensor z = sigmoid(add_bias(add(matmul(x, w_z), matmul(h, u_z)), b_z));
  const Tensor r = sigmoid(add_bias(add(matmul(x, w_r), matmul(h, u_r)), b_r));
  const Tensor n = tanh(add_bias(add(matmul(x, w_n), matmul(mul(r, h), u_n)), b_n));
  return add(n, mul(z, sub(h, n)));
}

void GruCell::collect(const std::string& name, std::vector<NamedTensor>& out) const {
  out.push_back({name + ".w_z", w_z});
  out.push_back({name + ".w_r", w_r});
  out.push_back({name + ".w_n", w_n});
  out.push_back({name + ".u_z", u_z});
  out.push_back({name + ".u_r", u_r});
  out.push_back({name + ".u_n", u_n});
  out.push_back({name + ".b_z", b_z});
  out.push_back({name + ".b_r", b_r});
  out.push_back({name + ".b_n", b_n});
}

// ---- ContextEncoder -------------------------------------------------------

void ContextConfig::validate() const {
  if (d_r < 2 || d_r % 2 != 0) {
    throw ConfigError(fmt::format("context width d_r={} must be even and at least 2", d_r));
  }
  if (kernels == 0) throw ConfigError("context mixture needs at least one kernel");
  if (d_in == 0) throw ConfigError("input width must be positive");
}

ContextEncoder::ContextEncoder(const ContextConfig& cfg, const Initializer& init,
                               const std::string& prefix)
    : cfg_(cfg), prefix_(prefix) {
  cfg_.validate();
  const std::size_t hidden = cfg_.d_r / 2;
  forward_ = GruCell::create(init, prefix_ + ".rnn_fwd", cfg_.d_in, hidden);
  backward_ = GruCell::create(init, prefix_ + ".rnn_bwd", cfg_.d_in, hidden);
  mixture_ = Linear::kaiming(init, prefix_ + ".mixture", cfg_.d_r + cfg_.attr_dim, cfg_.kernels);
  local_ = Linear::kaiming(init, prefix_ + ".local", cfg_.d_in, cfg_.kernels);
  global_ = init.zeros({1, cfg_.kernels});
}

Tensor ContextEncoder::context_features(const Tensor& x, const std::vector<bool>& pad_mask,
                                        const ForwardContext& ctx,
                                        const std::optional<Tensor>& attributes) const {
  (void)ctx;
  if (x.rank() != 2 || x.cols() != cfg_.d_in || pad_mask.size() != x.rows()) {
    throw DimensionError(fmt::format("context: expected [L x {}] with L mask entries, got {}",
                                     cfg_.d_in, shape_string(x.shape())));
  }
  const std::size_t l = x.rows();
  const std::size_t hidden = cfg_.d_r / 2;
  std::size_t first = 0;
  while (first < l && pad_mask[first]) ++first;
  for (std::size_t t = first; t < l; ++t) {
    if (pad_mask[t]) throw InputError("padding must precede every real position");
  }
  if (first == l) throw InputError("window has no real positions");

  std::vector<Tensor> fwd(l), bwd(l);
  Tensor h = Tensor::zeros({1, hidden});
  for (std::size_t t = first; t < l; ++t) {
    h = forward_.step(row(x, t), h);
    fwd[t] = h;
  }
  h = Tensor::zeros({1, hidden});
  for (std::size_t t = l; t-- > first;) {
    h = backward_.step(row(x, t), h);
    bwd[t] = h;
  }
  std::vector<Tensor> rows;
  rows.reserve(l);
  for (std::size_t t = 0; t < l; ++t) {
    rows.push_back(t < first ? Tensor::zeros({1, cfg_.d_r}) : concat({fwd[t], bwd[t]}, 1));
  }
  Tensor c = concat(rows, 0);
  if (attributes) {
    if (attributes->rank() != 2 || attributes->rows() != l || attributes->cols() != cfg_.attr_dim) {
      throw DimensionError(fmt::format("context attributes must be [{} x {}], got {}", l,
                                       cfg_.attr_dim, shape_string(attributes->shape())));
    }
    c = concat({c, *attributes}, 1);
  } else if (cfg_.attr_dim != 0) {
    throw DimensionError(fmt::format("model expects {} context attribute columns", cfg_.attr_dim));
  }
  return c;
}

Tensor ContextEncoder::mixture(const Tensor& c, const ForwardContext& ctx) const {
  return softmax(ctx.dropout(mixture_(c)), 1);
}

Tensor ContextEncoder::distribution(const Tensor& x, const std::vector<bool>& pad_mask,
                                   const ForwardContext& ctx,
                                   const std::optional<Tensor>& attributes) const {
  switch (cfg_.mode) {
    case ContextMode::global:
      return tile_rows(softmax(global_, 1), x.rows());
    case ContextMode::local:
      return softmax(ctx.dropout(local_(x)), 1);
    case ContextMode::bidirectional:
      break;
  }
  const Tensor c = ctx.dropout(context_features(x, pad_mask, ctx, attributes));
  return mixture(c, ctx);
}

void ContextEncoder::collect(std::vector<NamedTensor>& out) const {
  switch (cfg_.mode) {
    case ContextMode::bidirectional:
      forward_.collect(prefix_ + ".rnn_fwd", out);
      backward_.collect(prefix_ + ".rnn_bwd", out);
      mixture_.collect(prefix_ + ".mixture", out);
      break;
    case ContextMode::global:
      out.push_back({prefix_ + ".global", global_});
      break;
    case ContextMode::local:
      local_.collect(prefix_ + ".local", out);
      break;
  }
}

// ---- fuse -----------------------------------------------------------------

FusedAttention fuse(const Tensor& alpha, const Tensor& beta, const Tensor& p,
                    const std::vector<bool>& pad_mask) {
  const std::size_t l = pad_mask.size();
  const bool ok = alpha.rank() == 2 && alpha.rows() == l && alpha.cols() == 1 &&
                  beta.rank() == 2 && beta.rows() == l && p.shape() == beta.shape();
  if (!ok) {
    throw DimensionError(fmt::format("fuse: alpha {}, beta {}, P {} for L={}",
                                     shape_string(alpha.shape()), shape_string(beta.shape()),
                                     shape_string(p.shape()), l));
  }
  FusedAttention out;
  out.beta_c = reshape(sum(mul(beta, p), 1), {l, 1});
  out.gamma = softmax(add_constant(mul(alpha, out.beta_c), position_mask_offsets(pad_mask)), 0);
  return out;
}

// ---- OutputHead -----------------------------------------------------------

OutputHead::OutputHead(std::size_t d_in, std::size_t d_out, std::size_t vocab_rows,
                       const std::optional<Tensor>& shared_embedding, const Initializer& init,
                       const std::string& prefix)
    : prefix_(prefix), shared_(shared_embedding.has_value()) {
  if (shared_) {
    embedding_ = *shared_embedding;
    if (embedding_.rank() != 2 || embedding_.rows() != vocab_rows || embedding_.cols() != d_out) {
      throw ConfigError(fmt::format("shared embedding {} does not match [{} x {}]",
                                    shape_string(embedding_.shape()), vocab_rows, d_out));
    }
  } else {
    embedding_ = init.normal(prefix_ + ".embedding", {vocab_rows, d_out},
                             1.0 / std::sqrt(static_cast<double>(d_out)));
  }
  projection_ = Linear::kaiming(init, prefix_ + ".projection", d_in, d_out);
}

Tensor OutputHead::represent(const Tensor& gamma, const Tensor& x,
                             const ForwardContext& ctx) const {
  const Tensor pooled = reshape(weighted_sum(gamma, x), {1, x.cols()});
  return ctx.dropout(projection_(pooled));
}

Tensor OutputHead::scores(const Tensor& x_hat, std::span<const std::size_t> items) const {
  const Tensor rows = gather_rows(embedding_, items);
  return reshape(matmul(rows, transpose(x_hat)), {items.size()});
}

std::vector<double> OutputHead::score_all(const Tensor& x_hat) const {
  const std::size_t n = embedding_.rows(), d = embedding_.cols();
  if (x_hat.size() != d) {
    throw DimensionError(fmt::format("score_all: representation {} vs embedding width {}",
                                     shape_string(x_hat.shape()), d));
  }
  const auto e = embedding_.values();
  const auto q = x_hat.values();
  std::vector<double> out(n, 0.0);
  out[0] = -std::numeric_limits<double>::infinity();
  for (std::size_t v = 1; v < n; ++v) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += e[v * d + j] * q[j];
    out[v] = acc;
  }
  return out;
}

void OutputHead::collect(std::vector<NamedTensor>& out) const {
  if (!shared_) out.push_back({prefix_ + ".embedding", embedding_});
  projection_.collect(prefix_ + ".projection", out);
}

}  // namespace cta
