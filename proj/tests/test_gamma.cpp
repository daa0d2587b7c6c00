#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "commands.hpp"
#include "cta/context.hpp"
#include "cta/error.hpp"
#include "cta/model.hpp"
#include "support.hpp"

using namespace cta;
using namespace cta::test;

namespace {

std::vector<double> flat(const Tensor& t) { return to_vector(t); }

double sigmoid_d(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// One gated-recurrent step on plain vectors.
std::vector<double> oracle_gru(const GruCell& c, const std::vector<double>& x,
                               const std::vector<double>& h) {
  const std::size_t hid = h.size();
  auto affine = [&](const Tensor& w, const Tensor& u, const Tensor& b,
                    const std::vector<double>& hh) {
    std::vector<double> out(hid);
    for (std::size_t j = 0; j < hid; ++j) {
      double acc = b.at(j);
      for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * w.at(i, j);
      for (std::size_t i = 0; i < hid; ++i) acc += hh[i] * u.at(i, j);
      out[j] = acc;
    }
    return out;
  };
  auto z = affine(c.w_z, c.u_z, c.b_z, h);
  auto r = affine(c.w_r, c.u_r, c.b_r, h);
  std::vector<double> rh(hid);
  for (std::size_t j = 0; j < hid; ++j) rh[j] = sigmoid_d(r[j]) * h[j];
  auto n = affine(c.w_n, c.u_n, c.b_n, rh);
  std::vector<double> out(hid);
  for (std::size_t j = 0; j < hid; ++j) {
    const double nn = std::tanh(n[j]);
    const double zz = sigmoid_d(z[j]);
    out[j] = (1 - zz) * nn + zz * h[j];
  }
  return out;
}

void randomize(GruCell& c, Rng& rng) {
  for (Tensor* t : {&c.w_z, &c.w_r, &c.w_n, &c.u_z, &c.u_r, &c.u_n, &c.b_z, &c.b_r, &c.b_n})
    for (double& v : t->mutable_values()) v = 0.5 * standard_normal(rng);
}

void copy_cell(const GruCell& from, GruCell& to) {
  const std::vector<const Tensor*> src{&from.w_z, &from.w_r, &from.w_n, &from.u_z, &from.u_r,
                                       &from.u_n, &from.b_z, &from.b_r, &from.b_n};
  const std::vector<Tensor*> dst{&to.w_z, &to.w_r, &to.w_n, &to.u_z, &to.u_r,
                                 &to.u_n, &to.b_z, &to.b_r, &to.b_n};
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto s = src[i]->values();
    std::copy(s.begin(), s.end(), dst[i]->mutable_values().begin());
  }
}

ModelConfig toy_config(std::size_t items = 20) {
  ModelConfig m;
  m.num_items = items;
  m.d_in = 8;
  m.d_a = 8;
  m.heads = 2;
  m.blocks = 2;
  m.d_r = 6;
  m.window = 6;
  m.kernels = "exp2,log1,lin1";
  m.dropout = 0.0;
  return m;
}

WindowSample random_window(Rng& rng, std::size_t window, std::size_t items) {
  const std::size_t pads = uniform_index(rng, window);
  std::vector<std::size_t> ids(window, 0);
  std::vector<double> t(window, 0.0);
  double acc = 0.1 + uniform01(rng);
  for (std::size_t i = window; i-- > pads;) {
    ids[i] = 1 + uniform_index(rng, items);
    t[i] = acc;
    acc += 5 * uniform01(rng);
  }
  return window_of(ids, t, 1);
}

}  // namespace

TEST(Context, ConfigValidation) {
  EXPECT_THROW((ContextConfig{8, 5, 2}.validate()), ConfigError);
  EXPECT_THROW((ContextConfig{8, 6, 0}.validate()), ConfigError);
  EXPECT_THROW(parse_context_mode("sideways"), ConfigError);
  for (auto m : {ContextMode::bidirectional, ContextMode::global, ContextMode::local})
    EXPECT_EQ(parse_context_mode(to_string(m)), m);
}

TEST(Context, FeaturesMatchRecurrenceOracle) {
  ContextEncoder enc(ContextConfig{5, 6, 3}, Initializer(3));
  Rng rng(1);
  randomize(enc.forward_cell(), rng);
  randomize(enc.backward_cell(), rng);
  const Tensor x = random_tensor({5, 5}, rng, false);
  const std::vector<bool> pad{true, false, false, false, false};
  const Tensor c = enc.context_features(x, pad, {});
  ASSERT_EQ(c.shape(), (Shape{5, 6}));
  const Mat xm = to_mat(x);
  std::vector<double> h(3, 0.0);
  Mat fwd(5), bwd(5);
  for (std::size_t t = 1; t < 5; ++t) fwd[t] = h = oracle_gru(enc.forward_cell(), xm[t], h);
  h.assign(3, 0.0);
  for (std::size_t t = 5; t-- > 1;) bwd[t] = h = oracle_gru(enc.backward_cell(), xm[t], h);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(c.at(0, j), 0.0);
  for (std::size_t t = 1; t < 5; ++t) {
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_NEAR(c.at(t, j), fwd[t][j], 1e-12);
      EXPECT_NEAR(c.at(t, 3 + j), bwd[t][j], 1e-12);
    }
  }
}

TEST(Context, SinglePosition) {
  ContextEncoder enc(ContextConfig{4, 4, 2}, Initializer(4));
  Rng rng(2);
  randomize(enc.forward_cell(), rng);
  randomize(enc.backward_cell(), rng);
  const Tensor x = random_tensor({1, 4}, rng, false);
  const Tensor c = enc.context_features(x, {false}, {});
  const auto xs = flat(x);
  const auto f = oracle_gru(enc.forward_cell(), xs, {0, 0});
  const auto b = oracle_gru(enc.backward_cell(), xs, {0, 0});
  EXPECT_NEAR(c.at(0, 0), f[0], 1e-12);
  EXPECT_NEAR(c.at(0, 1), f[1], 1e-12);
  EXPECT_NEAR(c.at(0, 2), b[0], 1e-12);
  EXPECT_NEAR(c.at(0, 3), b[1], 1e-12);
  EXPECT_GT(std::abs(c.at(0, 0)) + std::abs(c.at(0, 2)), 0.0);
}

TEST(Context, ReversalSwapsDirections) {
  ContextEncoder enc(ContextConfig{4, 6, 2}, Initializer(5));
  Rng rng(3);
  randomize(enc.forward_cell(), rng);
  copy_cell(enc.forward_cell(), enc.backward_cell());
  const Tensor x = random_tensor({4, 4}, rng, false);
  const std::vector<std::size_t> rev{3, 2, 1, 0};
  const std::vector<bool> pad(4, false);
  const Tensor c = enc.context_features(x, pad, {});
  const Tensor cr = enc.context_features(gather_rows(x, rev), pad, {});
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_NEAR(cr.at(3 - t, j), c.at(t, 3 + j), 1e-14);
      EXPECT_NEAR(cr.at(3 - t, 3 + j), c.at(t, j), 1e-14);
    }
  }
}

TEST(Context, ZeroInputZeroCells) {
  ContextEncoder enc(ContextConfig{4, 4, 2}, Initializer(6));
  for (GruCell* cell : {&enc.forward_cell(), &enc.backward_cell()})
    for (Tensor* t : {&cell->w_z, &cell->w_r, &cell->w_n, &cell->u_z, &cell->u_r, &cell->u_n,
                      &cell->b_z, &cell->b_r, &cell->b_n})
      for (double& v : t->mutable_values()) v = 0.0;
  for (double v : flat(enc.context_features(Tensor::zeros({3, 4}), {false, false, false}, {})))
    EXPECT_EQ(v, 0.0);
}

TEST(Context, Errors) {
  ContextEncoder enc(ContextConfig{4, 4, 2}, Initializer(6));
  EXPECT_THROW(enc.context_features(Tensor::zeros({2, 4}), {true, true}, {}), InputError);
  EXPECT_THROW(enc.context_features(Tensor::zeros({2, 3}), {false, false}, {}), DimensionError);
  EXPECT_THROW(enc.context_features(Tensor::zeros({2, 4}), {false, true}, {}), InputError);
}

TEST(Context, AttributesAppended) {
  ContextEncoder enc(ContextConfig{4, 4, 2, ContextMode::bidirectional, 3}, Initializer(7));
  const Tensor attrs({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor c = enc.context_features(Tensor::zeros({2, 4}), {false, false}, {}, attrs);
  ASSERT_EQ(c.shape(), (Shape{2, 7}));
  EXPECT_EQ(c.at(1, 6), 6.0);
  EXPECT_THROW(enc.context_features(Tensor::zeros({2, 4}), {false, false}, {}), DimensionError);
}

TEST(Mixture, ZeroLayerIsUniform) {
  ContextEncoder enc(ContextConfig{4, 4, 5}, Initializer(8));
  for (double& v : enc.mixture_layer().weight.mutable_values()) v = 0.0;
  Rng rng(1);
  for (double v : flat(enc.mixture(random_tensor({3, 4}, rng, false), {}))) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST(Mixture, SingleKernel) {
  ContextEncoder enc(ContextConfig{4, 4, 1}, Initializer(9));
  Rng rng(2);
  for (double v : flat(enc.mixture(random_tensor({3, 4}, rng, false, 5.0), {}))) EXPECT_EQ(v, 1.0);
}

TEST(Mixture, RowsSumToOne) {
  ContextEncoder enc(ContextConfig{4, 6, 7}, Initializer(10));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Tensor p = enc.distribution(random_tensor({5, 4}, rng, false, 3.0),
                                      {true, false, false, false, false}, {});
    for (std::size_t i = 0; i < 5; ++i) {
      double s = 0;
      for (std::size_t k = 0; k < 7; ++k) s += p.at(i, k);
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(Mixture, GlobalModeSharesRows) {
  ContextEncoder enc(ContextConfig{4, 4, 3, ContextMode::global}, Initializer(11));
  Rng rng(3);
  for (double& v : enc.global_logits().mutable_values()) v = standard_normal(rng);
  const Tensor p = enc.distribution(random_tensor({4, 4}, rng, false), std::vector<bool>(4, false), {});
  for (std::size_t i = 1; i < 4; ++i)
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(p.at(i, k), p.at(0, k));
}

TEST(Mixture, LocalModeIsPermutationEquivariant) {
  ContextEncoder enc(ContextConfig{4, 4, 3, ContextMode::local}, Initializer(12));
  Rng rng(4);
  const Tensor x = random_tensor({5, 4}, rng, false);
  const std::vector<std::size_t> perm{2, 4, 0, 1, 3};
  const std::vector<bool> pad(5, false);
  const Tensor p = enc.distribution(x, pad, {});
  const Tensor pp = enc.distribution(gather_rows(x, perm), pad, {});
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(pp.at(i, k), p.at(perm[i], k));
}

// The default encoder mixes positions, so neither ablation property holds.
TEST(Mixture, BidirectionalModeViolatesBoth) {
  ContextEncoder enc(ContextConfig{4, 4, 3}, Initializer(13));
  Rng rng(5);
  const Tensor x = random_tensor({5, 4}, rng, false);
  const std::vector<std::size_t> perm{2, 4, 0, 1, 3};
  const std::vector<bool> pad(5, false);
  const Tensor p = enc.distribution(x, pad, {});
  const Tensor pp = enc.distribution(gather_rows(x, perm), pad, {});
  double row_spread = 0, perm_gap = 0;
  for (std::size_t k = 0; k < 3; ++k) row_spread += std::abs(p.at(1, k) - p.at(0, k));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t k = 0; k < 3; ++k) perm_gap += std::abs(pp.at(i, k) - p.at(perm[i], k));
  EXPECT_GT(row_spread, 1e-6);
  EXPECT_GT(perm_gap, 1e-6);
}

TEST(Fuse, WorkedExample) {
  const Tensor alpha({3, 1}, {0.2, 0.3, 0.5});
  const Tensor beta({3, 2}, {1, 2, 0.5, 1, 0.25, -1});
  const Tensor p({3, 2}, {0.5, 0.5, 0.25, 0.75, 1, 0});
  const auto f = fuse(alpha, beta, p, std::vector<bool>(3, false));
  EXPECT_EQ(flat(f.beta_c), (std::vector<double>{1.5, 0.875, 0.25}));
  const auto g = flat(f.gamma);
  EXPECT_NEAR(g[0], 0.35680498340484507, 1e-15);
  EXPECT_NEAR(g[1], 0.3436725682305172, 1e-15);
  EXPECT_NEAR(g[2], 0.2995224483646377, 1e-15);
}

TEST(Fuse, ConstantTemporalFactorGivesSoftmaxOfAlpha) {
  const Tensor alpha({4, 1}, {0, 0.1, 0.3, 0.6});
  const Tensor ones = Tensor::full({4, 1}, 1.0);
  const std::vector<bool> pad{true, false, false, false};
  const auto g = flat(fuse(alpha, ones, ones, pad).gamma);
  const auto expected = softmax_vec({0.1, 0.3, 0.6});
  EXPECT_EQ(g[0], 0.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g[i + 1], expected[i], 1e-15);
}

TEST(Fuse, MonotoneTemporalScoreOrdersGamma) {
  const std::size_t l = 6;
  const Tensor alpha = Tensor::full({l, 1}, 1.0 / l);
  // beta_c decreasing in T; intervals shrink left to right, so gamma grows.
  std::vector<double> b(l);
  for (std::size_t i = 0; i < l; ++i) b[i] = std::exp(-static_cast<double>(l - i));
  const auto g = flat(fuse(alpha, Tensor({l, 1}, b), Tensor::full({l, 1}, 1.0),
                           std::vector<bool>(l, false))
                          .gamma);
  for (std::size_t i = 1; i < l; ++i) EXPECT_GT(g[i], g[i - 1]);
}

TEST(Fuse, SingleRealPosition) {
  const auto g = flat(fuse(Tensor({3, 1}, {0, 0, 1}), Tensor({3, 1}, {0, 0, -4}),
                           Tensor::full({3, 1}, 1.0), {true, true, false})
                          .gamma);
  EXPECT_EQ(g, (std::vector<double>{0, 0, 1}));
}

TEST(Fuse, LogitShiftInvariance) {
  // alpha = 1 everywhere makes the logits equal beta_c; shifting beta_c by a
  // constant (a constant kernel column under a fixed mixture) leaves gamma.
  Rng rng(7);
  const std::size_t l = 5;
  const Tensor alpha = Tensor::full({l, 1}, 1.0);
  const Tensor beta = random_tensor({l, 1}, rng, false);
  std::vector<double> shifted(beta.values().begin(), beta.values().end());
  for (double& v : shifted) v += 3.7;
  const Tensor ones = Tensor::full({l, 1}, 1.0);
  const auto a = flat(fuse(alpha, beta, ones, std::vector<bool>(l, false)).gamma);
  const auto b = flat(fuse(alpha, Tensor({l, 1}, shifted), ones, std::vector<bool>(l, false)).gamma);
  for (std::size_t i = 0; i < l; ++i) EXPECT_NEAR(a[i], b[i], 1e-14);
}

TEST(Fuse, ShapeMismatch) {
  EXPECT_THROW(fuse(Tensor::zeros({3, 1}), Tensor::zeros({3, 2}), Tensor::zeros({3, 3}),
                    std::vector<bool>(3, false)),
               DimensionError);
}

TEST(OutputHead, OneHotGammaSelectsRow) {
  const Tensor e({3, 2}, {0, 0, 1, 0, 0, 1}, true);
  OutputHead head(2, 2, 3, e, Initializer(1));
  for (double& v : head.projection().weight.mutable_values()) v = 0.0;
  head.projection().weight.mutable_values()[0] = 1.0;
  head.projection().weight.mutable_values()[3] = 1.0;
  const Tensor x({2, 2}, {0, 1, 1, 0});
  const Tensor xh = head.represent(Tensor({2, 1}, {0, 1}), x, {});
  EXPECT_EQ(flat(xh), (std::vector<double>{1, 0}));
  const auto s = head.score_all(xh);
  EXPECT_TRUE(std::isinf(s[0]) && s[0] < 0);
  EXPECT_EQ(s[1], 1.0);
  EXPECT_EQ(s[2], 0.0);
  const std::vector<std::size_t> items{2, 1};
  EXPECT_EQ(flat(head.scores(xh, items)), (std::vector<double>{0, 1}));
}

TEST(OutputHead, MatchesFormula) {
  Rng rng(11);
  const Tensor e = random_tensor({9, 16}, rng);
  OutputHead head(16, 16, 9, e, Initializer(2));
  for (double& v : head.projection().bias.mutable_values()) v = standard_normal(rng);
  const Tensor x = random_tensor({8, 16}, rng, false);
  std::vector<double> g(8);
  for (double& v : g) v = uniform01(rng);
  const double total = std::accumulate(g.begin(), g.end(), 0.0);
  for (double& v : g) v /= total;
  const auto s = head.score_all(head.represent(Tensor({8, 1}, g), x, {}));
  const Mat xm = to_mat(x);
  std::vector<double> pooled(16, 0.0);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t c = 0; c < 16; ++c) pooled[c] += g[i] * xm[i][c];
  Mat xh = mat_mul(Mat{pooled}, to_mat(head.projection().weight));
  for (std::size_t c = 0; c < 16; ++c) xh[0][c] += head.projection().bias.at(c);
  const Mat em = to_mat(e);
  for (std::size_t v = 1; v < 9; ++v) {
    double acc = 0;
    for (std::size_t c = 0; c < 16; ++c) acc += em[v][c] * xh[0][c];
    EXPECT_NEAR(s[v], acc, 1e-12);
  }
}

TEST(OutputHead, SharedEmbeddingIsOneTensor) {
  ModelConfig cfg = toy_config();
  CtaModel model(cfg, 3);
  EXPECT_TRUE(model.output().shared());
  EXPECT_TRUE(model.output().embedding().same_node(model.input_embedding()));
  std::size_t count = 0;
  for (const auto& p : model.parameters()) count += p.tensor.same_node(model.input_embedding());
  EXPECT_EQ(count, 1u);

  cfg.share_embeddings = false;
  cfg.d_out = 5;
  CtaModel separate(cfg, 3);
  EXPECT_FALSE(separate.output().embedding().same_node(separate.input_embedding()));
  EXPECT_EQ(separate.output().embedding().shape(), (Shape{21, 5}));
}

TEST(Model, NormalizationAcrossRandomDraws) {
  for (std::uint64_t draw = 0; draw < 100; ++draw) {
    Rng rng(derive_seed({draw, 0x9a}));
    ModelConfig cfg = toy_config(10 + uniform_index(rng, 20));
    cfg.window = 2 + uniform_index(rng, 8);
    cfg.kernels = std::vector<std::string>{"exp1", "exp3,lin2", "log2,const1", "lin4"}[draw % 4];
    cfg.alpha = draw % 5 == 0 ? AlphaMode::flat : AlphaMode::self_attention;
    cfg.context = std::vector<ContextMode>{ContextMode::bidirectional, ContextMode::global,
                                           ContextMode::local}[draw % 3];
    const CtaModel model(cfg, draw);
    const WindowSample w = random_window(rng, cfg.window, cfg.num_items);
    NoGradGuard guard;
    const ForwardTrace t = model.forward(w, {});
    double sa = 0, sg = 0;
    for (std::size_t i = 0; i < cfg.window; ++i) {
      sa += t.alpha.at(i);
      sg += t.gamma.at(i);
      if (w.pad_mask[i]) {
        EXPECT_EQ(t.alpha.at(i), 0.0);
        EXPECT_EQ(t.gamma.at(i), 0.0);
      }
      double sp = 0;
      for (std::size_t k = 0; k < t.p.cols(); ++k) sp += t.p.at(i, k);
      EXPECT_NEAR(sp, 1.0, 1e-9);
    }
    EXPECT_NEAR(sa, 1.0, 1e-9);
    EXPECT_NEAR(sg, 1.0, 1e-9);
  }
}

TEST(Model, FlatAlphaLeavesTemporalPathUntouched) {
  ModelConfig cfg = toy_config();
  const CtaModel full(cfg, 5);
  cfg.alpha = AlphaMode::flat;
  const CtaModel flat_model(cfg, 5);
  Rng rng(1);
  const WindowSample w = random_window(rng, cfg.window, cfg.num_items);
  const auto a = full.forward(w, {});
  const auto b = flat_model.forward(w, {});
  EXPECT_EQ(flat(a.beta_c), flat(b.beta_c));
  EXPECT_NE(flat(a.alpha), flat(b.alpha));
  EXPECT_LT(flat_model.parameter_count(), full.parameter_count());
}

TEST(Model, FullNeutrality) {
  ModelConfig cfg = toy_config();
  cfg.alpha = AlphaMode::flat;
  cfg.kernels = "const1";
  const CtaModel model(cfg, 6);
  const WindowSample w = window_of({0, 0, 3, 4, 5, 6}, {0, 0, 4, 3, 2, 1}, 2);
  const auto g = flat(model.forward(w, {}).gamma);
  EXPECT_EQ(g[0], 0.0);
  for (std::size_t i = 2; i < 6; ++i) EXPECT_NEAR(g[i], 0.25, 1e-15);
}

TEST(Model, PaddedRowsDoNotReachScores) {
  const CtaModel model(toy_config(), 7);
  const auto a = model.score_all(window_of({0, 0, 3, 4, 5, 6}, {0, 0, 4, 3, 2, 1}, 2));
  // Same real events; the pad rows get a different embedding row and interval.
  WindowSample w = window_of({0, 0, 3, 4, 5, 6}, {0, 0, 4, 3, 2, 1}, 2);
  w.intervals[0] = 99.0;
  CtaModel same(toy_config(), 7);
  for (double& v : same.input_embedding().mutable_values().subspan(0, 8)) v = 42.0;
  const auto b = same.score_all(w);
  for (std::size_t v = 1; v < a.size(); ++v) EXPECT_NEAR(a[v], b[v], 1e-12);
}

TEST(Model, InputValidation) {
  const CtaModel model(toy_config(), 8);
  EXPECT_THROW(model.forward(window_of({1, 2, 3}, {3, 2, 1}, 1), {}), DimensionError);
  EXPECT_THROW(model.forward(window_of({1, 2, 3, 4, 5, 0}, {6, 5, 4, 3, 2, 0}, 1), {}), InputError);
  EXPECT_THROW(model.forward(window_of({1, 2, 3, 4, 5, 99}, {6, 5, 4, 3, 2, 1}, 1), {}),
               DimensionError);
  EXPECT_THROW(model.forward(window_of({1, 2, 3, 4, 5, 6}, {6, 5, 4, 3, 2, -1}, 1), {}), InputError);
  EXPECT_THROW(model.parameter("nope"), LookupError);
  ModelConfig bad = toy_config();
  bad.dropout = 1.0;
  EXPECT_THROW(CtaModel(bad, 1), ConfigError);
}

TEST(Model, EndToEndGradientToyInstance) {
  cli::GradcheckOptions opt;
  opt.size = "toy";
  opt.seed = 3;
  const auto out = cli::gradcheck(opt);
  EXPECT_TRUE(out.passed) << out.result.max_error << " at " << out.result.worst_parameter;
  EXPECT_LT(out.result.max_error, 1e-4);
  EXPECT_GT(out.result.coordinates, 100u);
}
