#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "dvp/autodiff.hpp"
#include "dvp/gradcheck.hpp"
#include "dvp/optim.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace dvp;
using namespace dvp::ad;
using test::op_cases;
using test::OpCase;

TEST(Autodiff, EveryOpMatchesCentralDifferences) {
  for (const OpCase& c : op_cases()) {
    const GradCheckResult r = grad_check(c.fn, c.point);
    EXPECT_LT(r.max_rel_error, 1e-6) << c.name << " leaf " << r.worst_leaf << " index "
                                     << r.worst_index << " analytic " << r.worst_analytic
                                     << " numeric " << r.worst_numeric;
    EXPECT_GT(r.coords_checked, 0u) << c.name;
  }
}

TEST(Autodiff, MulAdjoints) {
  Tape t;
  const Var a = t.variable({3.0}, {1, 1}), b = t.variable({4.0}, {1, 1});
  const Var y = a * b;
  EXPECT_DOUBLE_EQ(y.item(), 12.0);
  t.backward(y);
  EXPECT_DOUBLE_EQ(t.grad(a)[0], 4.0);
  EXPECT_DOUBLE_EQ(t.grad(b)[0], 3.0);
}

TEST(Autodiff, SinAtZero) {
  Tape t;
  const Var x = t.variable({0.0}, {1, 1});
  const Var y = ad::sin(x);
  EXPECT_DOUBLE_EQ(y.item(), 0.0);
  t.backward(y);
  EXPECT_DOUBLE_EQ(t.grad(x)[0], 1.0);
}

TEST(Autodiff, SquareDerivative) {
  Tape t;
  const Var x = t.variable({3.0}, {1, 1});
  t.backward(x * x);
  EXPECT_DOUBLE_EQ(t.grad(x)[0], 6.0);
}

TEST(Autodiff, ReusedValueAccumulates) {
  Tape t;
  const Var x = t.variable({2.5}, {1, 1});
  t.backward(x * x + x);
  EXPECT_DOUBLE_EQ(t.grad(x)[0], 6.0);
}

TEST(Autodiff, BilinearCoordinateAdjointIsFieldSlope) {
  const GridGeometry g{8, 8, DomainMap::letterboxed(8, 8)};
  std::vector<double> f;
  for (const Vec2 c : g.cell_centers()) f.push_back(3.0 * c.x - 2.0 * c.y);
  Tape t;
  const Var field = t.constant(f, {64, 1});
  const Var p = t.variable({0.41, 0.52}, {1, 2});
  t.backward(sum(bilinear_sample(field, g, p)));
  const auto gp = t.grad(p);
  EXPECT_NEAR(gp[0], 3.0, 1e-10);
  EXPECT_NEAR(gp[1], -2.0, 1e-10);
}

TEST(Autodiff, RepeatedMapMatchesFiniteDifferences) {
  auto fn = [](Tape&, std::span<const Var> x) {
    Var v = x[0];
    for (int k = 0; k < 10; ++k) v = v + 0.1 * ad::sin(v);
    return sum(v);
  };
  const Tensor x0("x", {1, 5}, {-1.0, -0.3, 0.2, 0.9, 2.0});
  EXPECT_LT(grad_check(fn, std::span(&x0, 1)).max_rel_error, 1e-6);
}

TEST(Autodiff, ConstantInputsGetNoGradient) {
  Tape t;
  const Var c = t.constant({1.0, 2.0}, {1, 2});
  const Var x = t.variable({0.5, 0.5}, {1, 2});
  t.backward(sum(c * x));
  EXPECT_FALSE(c.needs_grad());
  EXPECT_TRUE(t.grad_sink(c).empty());
  EXPECT_EQ(t.grad(x), (std::vector<double>{1.0, 2.0}));
}

TEST(Autodiff, ShapeMismatchThrows) {
  Tape t;
  const Var a = t.variable(std::vector<double>(6, 1.0), {2, 3});
  const Var b = t.variable(std::vector<double>(4, 1.0), {2, 2});
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_THROW(t.backward(a), std::exception);
}

TEST(Autodiff, BackwardCostIsLinearInDepth) {
  // Node count grows linearly with the number of chained steps.
  auto nodes = [](int steps) {
    Tape t;
    Var v = t.variable({0.3}, {1, 1});
    for (int k = 0; k < steps; ++k) v = v + 0.1 * ad::sin(v);
    t.backward(v);
    return t.size();
  };
  EXPECT_EQ(nodes(200) - nodes(100), nodes(100) - nodes(0));
}

TEST(GradCheck, QuadraticForm) {
  const Tensor a("A", {3, 3}, {2.0, 0.5, -0.3, 0.5, 1.0, 0.2, -0.3, 0.2, 3.0});
  auto fn = [&](Tape& t, std::span<const Var> x) {
    const Var A = t.constant(a);
    return dot(x[0], affine(x[0], A));
  };
  const Tensor x("x", {1, 3}, {0.4, -1.2, 0.8});
  const GradCheckResult r = grad_check(fn, std::span(&x, 1));
  EXPECT_LT(r.max_rel_error, 1e-8);
  // Independent analytic gradient (A + A^T) x.
  const auto g = gradient(fn, std::span(&x, 1))[0];
  for (std::size_t i = 0; i < 3; ++i) {
    double expect = 0.0;
    for (std::size_t j = 0; j < 3; ++j) expect += (a.data[i * 3 + j] + a.data[j * 3 + i]) * x.data[j];
    EXPECT_NEAR(g[i], expect, 1e-12);
  }
}

TEST(GradCheck, ConstantFunctionHasZeroGradient) {
  auto fn = [](Tape& t, std::span<const Var> x) { return sum(x[0] * 0.0) + t.constant(4.0); };
  const Tensor x("x", {2, 2}, {1.0, 2.0, 3.0, 4.0});
  const auto g = gradient(fn, std::span(&x, 1))[0];
  for (double v : g) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(grad_check(fn, std::span(&x, 1)).max_rel_error, 0.0);
}

TEST(GradCheck, RelativeErrorDefinition) {
  EXPECT_NEAR(relative_error(1.0, 1.1, 1e-6), 0.1 / 1.1, 1e-15);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-9, 1e-6), 1e-3);
}

TEST(GradCheck, DetectsWrongRule) {
  auto fn = [](Tape&, std::span<const Var> x) {
    const Var v = x[0];
    // Square with a deliberately halved adjoint.
    std::vector<double> out(v.value().begin(), v.value().end());
    for (double& o : out) o *= o;
    const Var y = v.tape().record(v.shape(), out, {v}, [v](Tape& t, std::span<const double> g) {
      auto s = t.grad_sink(v);
      for (std::size_t k = 0; k < s.size(); ++k) s[k] += g[k] * v.value()[k];
    });
    return sum(y);
  };
  const Tensor x("x", {1, 2}, {0.5, -1.0});
  EXPECT_GT(grad_check(fn, std::span(&x, 1)).max_rel_error, 0.3);
}

// --------------------------------------------------------------------------

TEST(Adam, FirstStepMovesBySignTimesRate) {
  ParamGroup g("p", 0.01, {Tensor("w", {1, 3}, {1.0, 2.0, 3.0})});
  const std::vector<std::vector<double>> grads{{0.5, -2.0, 1e-3}};
  adam_step(g, grads);
  // m_hat = g, v_hat = g^2: update = -lr g / (|g| + eps).
  const double eps = AdamSettings{}.epsilon;
  EXPECT_NEAR(g.params[0].data[0], 1.0 - 0.01 * 0.5 / (0.5 + eps), 1e-15);
  EXPECT_NEAR(g.params[0].data[1], 2.0 + 0.01 * 2.0 / (2.0 + eps), 1e-15);
  EXPECT_NEAR(g.params[0].data[2], 3.0 - 0.01 * 1e-3 / (1e-3 + eps), 1e-15);
  EXPECT_EQ(g.step, 1);
}

TEST(Adam, ZeroGradientLeavesParametersAndDecaysMoments) {
  ParamGroup g("p", 0.01, {Tensor("w", {1, 2}, {1.0, -1.0})});
  adam_step(g, std::vector<std::vector<double>>{{1.0, 1.0}});
  const auto p = g.params[0].data;
  const auto m = g.first_moment[0];
  const auto v = g.second_moment[0];
  g.learning_rate = 0.0;
  adam_step(g, std::vector<std::vector<double>>{{0.0, 0.0}});
  EXPECT_EQ(g.params[0].data, p);
  EXPECT_DOUBLE_EQ(g.first_moment[0][0], 0.9 * m[0]);
  EXPECT_DOUBLE_EQ(g.second_moment[0][0], 0.999 * v[0]);
}

TEST(Adam, ZeroGradientFromFreshStateIsNoop) {
  ParamGroup g("p", 0.1, {Tensor("w", {1, 2}, {1.0, -1.0})});
  adam_step(g, std::vector<std::vector<double>>{{0.0, 0.0}});
  EXPECT_EQ(g.params[0].data, (std::vector<double>{1.0, -1.0}));
}

TEST(Adam, ZeroLearningRateIsNoop) {
  ParamGroup g("p", 0.0, {Tensor("w", {1, 2}, {1.0, -1.0})});
  adam_step(g, std::vector<std::vector<double>>{{3.0, -4.0}});
  EXPECT_EQ(g.params[0].data, (std::vector<double>{1.0, -1.0}));
}

TEST(Adam, BitReproducible) {
  auto run = [] {
    ParamGroup g("p", 0.01, {Tensor("w", {2, 2}, test::random_values(4, 5))});
    for (int k = 0; k < 50; ++k) {
      const auto grad = test::random_values(4, 100 + k);
      adam_step(g, std::vector<std::vector<double>>{grad}, 0.5);
    }
    return g.params[0].data;
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, GradientShapeMismatchThrows) {
  ParamGroup g("p", 0.01, {Tensor("w", {1, 2})});
  EXPECT_THROW(adam_step(g, std::vector<std::vector<double>>{{1.0}}), std::invalid_argument);
}

TEST(LrSchedule, StepDecayAtTwentyThousand) {
  EXPECT_DOUBLE_EQ(lr_schedule(0), 1.0);
  EXPECT_DOUBLE_EQ(lr_schedule(19999), 1.0);
  EXPECT_DOUBLE_EQ(lr_schedule(20000), 0.1);
  EXPECT_DOUBLE_EQ(lr_schedule(39999), 0.1);
}
