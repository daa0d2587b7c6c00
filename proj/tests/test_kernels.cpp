#include <gtest/gtest.h>

#include <cmath>

#include "cta/error.hpp"
#include "cta/kernels.hpp"
#include "support.hpp"

using namespace cta;
using cta::test::to_vector;

namespace {

KernelBank single(KernelKind kind, double a, double b) {
  KernelBank bank({kind}, Initializer(1));
  auto& k = bank.kernels()[0];
  if (k.learnable()) {
    k.a.mutable_values()[0] = a;
    k.b.mutable_values()[0] = b;
  }
  return bank;
}

Tensor column(std::vector<double> t) {
  const std::size_t n = t.size();
  return Tensor({n, 1}, std::move(t));
}

}  // namespace

TEST(Kernels, Examples) {
  EXPECT_EQ(single(KernelKind::exponential, 1, 0).evaluate(column({0})).item(), 1.0);
  EXPECT_EQ(single(KernelKind::logarithmic, 1, 0).evaluate(column({0})).item(), 0.0);
  EXPECT_EQ(to_vector(single(KernelKind::linear, 2, 3).evaluate(column({0, 1, 2}))),
            (std::vector<double>{3, 1, -1}));
}

TEST(Kernels, ClosedForms) {
  // Oracle values: 0.5 e^-T + 0.25 and -2 ln(1 + T) + 1 at T = 0, 1, 3.
  const auto e = to_vector(single(KernelKind::exponential, 0.5, 0.25).evaluate(column({0, 1, 3})));
  EXPECT_NEAR(e[0], 0.75, 1e-15);
  EXPECT_NEAR(e[1], 0.43393972058572117, 1e-15);
  EXPECT_NEAR(e[2], 0.274893534183932, 1e-15);
  const auto l = to_vector(single(KernelKind::logarithmic, 2, 1).evaluate(column({0, 1, 3})));
  EXPECT_NEAR(l[0], 1.0, 1e-15);
  EXPECT_NEAR(l[1], -0.3862943611198906, 1e-15);
  EXPECT_NEAR(l[2], -1.7725887222397811, 1e-15);
}

TEST(Kernels, ConstantIsOneWithoutParameters) {
  const KernelBank bank = default_bank("const1", Initializer(4));
  EXPECT_TRUE(bank.parameters().empty());
  for (double v : to_vector(bank.evaluate(column({0, 0.5, 7, 1e6})))) EXPECT_EQ(v, 1.0);
}

TEST(Kernels, NegativeIntervalRejected) {
  EXPECT_THROW(default_bank("exp1", Initializer(1)).evaluate(column({1, -0.5})), InputError);
}

TEST(Kernels, ColumnOrderFollowsKernelList) {
  KernelBank bank = default_bank("exp2,lin1,const1", Initializer(9));
  ASSERT_EQ(bank.size(), 4u);
  const Tensor t = column({0, 2});
  const Tensor beta = bank.evaluate(t);
  EXPECT_EQ(beta.shape(), (Shape{2, 4}));
  for (std::size_t k = 0; k < 4; ++k) {
    const auto& spec = bank.kernels()[k];
    const Tensor own = single(spec.kind, spec.learnable() ? spec.a.item() : 0,
                              spec.learnable() ? spec.b.item() : 0)
                           .evaluate(t);
    EXPECT_EQ(beta.at(0, k), own.at(0, 0));
    EXPECT_EQ(beta.at(1, k), own.at(1, 0));
  }
}

TEST(KernelSpec, Parsing) {
  EXPECT_EQ(parse_kernel_spec("exp5").size(), 5u);
  const auto kinds = parse_kernel_spec("exp5,lin5");
  ASSERT_EQ(kinds.size(), 10u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(kinds[i], KernelKind::exponential);
  for (std::size_t i = 5; i < 10; ++i) EXPECT_EQ(kinds[i], KernelKind::linear);
  EXPECT_EQ(parse_kernel_spec("const1"), (std::vector<KernelKind>{KernelKind::constant}));
  EXPECT_EQ(kernel_spec_string(kinds), "exp5,lin5");
  EXPECT_EQ(kernel_spec_string(parse_kernel_spec("exp2,lin1,exp1")), "exp2,lin1,exp1");
}

TEST(KernelSpec, Rejections) {
  for (const char* bad : {"", "exp0", "gauss2", "exp", "exp2,", ",exp2", "exp-1", "5exp"}) {
    EXPECT_THROW(parse_kernel_spec(bad), ConfigError) << bad;
  }
}

TEST(KernelSpec, InitialParametersInUnitInterval) {
  const KernelBank bank = default_bank("exp5,log5,lin5", Initializer(77));
  for (const auto& p : bank.parameters()) {
    const double v = p.tensor.item();
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(bank.parameters().size(), 30u);
  const KernelBank again = default_bank("exp5,log5,lin5", Initializer(77));
  for (std::size_t i = 0; i < 30; ++i)
    EXPECT_EQ(bank.parameters()[i].tensor.item(), again.parameters()[i].tensor.item());
}

TEST(Kernels, StrictlyDecreasingForPositiveA) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> t(10);
    double acc = 0;
    for (double& v : t) v = (acc += 0.01 + 3 * uniform01(rng));
    for (auto kind : {KernelKind::exponential, KernelKind::logarithmic, KernelKind::linear}) {
      const double a = 0.01 + uniform01(rng);
      const auto y = to_vector(single(kind, a, uniform01(rng)).evaluate(column(t)));
      for (std::size_t i = 1; i < y.size(); ++i) EXPECT_LT(y[i], y[i - 1]) << to_string(kind);
    }
  }
}

TEST(Kernels, ParameterGradients) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    KernelBank bank = default_bank("exp2,log2,lin2,const1", Initializer(seed));
    Rng rng(seed);
    std::vector<double> t(6);
    for (double& v : t) v = 5 * uniform01(rng);
    const Tensor tt = column(t);
    const Tensor w = cta::test::random_tensor({6, 7}, rng, false);
    GradCheckOptions o;
    o.method = DiffMethod::ridders;
    o.step = 1e-3;
    const auto r = grad_check([&] { return sum_all(mul(bank.evaluate(tt), w)); }, bank.parameters(), o);
    EXPECT_LT(r.max_error, 1e-6) << r.worst_parameter;
  }
}
