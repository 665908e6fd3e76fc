#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "dvp/gradcheck.hpp"
#include "dvp/vortex.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace dvp;
using ad::Tape;
using ad::Tensor;
using ad::Var;
constexpr double kPi = std::numbers::pi;

namespace {

VortexState one_vortex(Vec2 p, double w, double d) { return {{p}, {w}, {d}}; }

VortexState random_state(std::size_t n, std::uint64_t seed) {
  const auto v = test::random_values(4 * n, seed, 0.0, 1.0);
  VortexState s;
  for (std::size_t i = 0; i < n; ++i) {
    s.positions.push_back({0.2 + 0.6 * v[4 * i], 0.2 + 0.6 * v[4 * i + 1]});
    s.strengths.push_back(2.0 * v[4 * i + 2] - 1.0);
    s.sizes.push_back(0.05 + 0.2 * v[4 * i + 3]);
  }
  return s;
}

// Plain-double SIREN residual stack mirroring the network layout.
double network_oracle(const SineResNet& net, double input) {
  const auto& p = net.params();
  std::vector<double> x{input};
  std::size_t k = 0;
  for (std::size_t width : net.widths()) {
    const std::size_t in = x.size();
    const Tensor &w1 = p[k], &b1 = p[k + 1], &w2 = p[k + 2], &b2 = p[k + 3];
    std::vector<double> h1(width), out(width);
    for (std::size_t o = 0; o < width; ++o) {
      double z = b1.data[o];
      for (std::size_t i = 0; i < in; ++i) z += w1.data[o * in + i] * x[i];
      h1[o] = std::sin(z);
    }
    for (std::size_t o = 0; o < width; ++o) {
      double z = b2.data[o];
      for (std::size_t i = 0; i < width; ++i) z += w2.data[o * width + i] * h1[i];
      double skip = 0.0;
      if (in != width) {
        const Tensor& proj = p[k + 4];
        for (std::size_t i = 0; i < in; ++i) skip += proj.data[o * in + i] * x[i];
      } else {
        skip = x[o];
      }
      out[o] = std::sin(z) + skip;
    }
    k += in != width ? 5 : 4;
    x = out;
  }
  const Tensor &hw = p[k], &hb = p[k + 1];
  double y = hb.data[0];
  for (std::size_t i = 0; i < x.size(); ++i) y += hw.data[i] * x[i];
  return y;
}

}  // namespace

TEST(DecodeParams, ZeroLogits) {
  const std::vector<double> zero{0.0};
  const auto d = decode_params(zero, zero);
  EXPECT_DOUBLE_EQ(d.strengths[0], 0.0);
  EXPECT_DOUBLE_EQ(d.sizes[0], 0.53);
}

TEST(DecodeParams, QuarterTurnAndLargeSizeLogit) {
  const std::vector<double> om{kPi / 2}, de{50.0};
  const auto d = decode_params(om, de);
  EXPECT_DOUBLE_EQ(d.strengths[0], 1.0);
  EXPECT_NEAR(d.sizes[0], 1.03, 1e-12);
}

TEST(PerpDirection, Examples) {
  EXPECT_EQ(perp_direction({1.0, 0.0}), (Vec2{0.0, -1.0}));
  EXPECT_EQ(perp_direction({0.0, 2.0}), (Vec2{1.0, 0.0}));
  const auto v = test::random_values(40, 4);
  for (std::size_t k = 0; k < 20; ++k) {
    const Vec2 p = perp_direction({v[2 * k], v[2 * k + 1]});
    EXPECT_NEAR(std::hypot(p.x, p.y), 1.0, 1e-15);
  }
}

TEST(AnalyticKernel, ClosedFormAtRadiusEqualsSize) {
  EXPECT_NEAR(analytic_kernel(KernelVariant::kAnalyticOrder1, 0.1, 0.1),
              (1.0 - std::exp(-1.0)) / (2 * kPi * 0.1), 1e-14);
  EXPECT_NEAR(analytic_kernel(KernelVariant::kAnalyticOrder1, 0.1, 0.1), 1.00597, 1e-3);
  // Order 2: M = 1 - (1 - rho^2) exp(-rho^2) = 1 at rho = 1.
  EXPECT_NEAR(analytic_kernel(KernelVariant::kAnalyticOrder2, 0.1, 0.1), 1.0 / (2 * kPi * 0.1), 1e-14);
}

TEST(AnalyticKernel, FarFieldIsPointVortex) {
  for (double r : {2.0, 5.0, 10.0})
    for (auto v : {KernelVariant::kAnalyticOrder1, KernelVariant::kAnalyticOrder2})
      EXPECT_NEAR(analytic_kernel(v, r, 0.1) * 2 * kPi * r, 1.0, 1e-12);
}

TEST(AnalyticKernel, ZeroAtOriginAndFiniteNearIt) {
  for (auto v : {KernelVariant::kAnalyticOrder1, KernelVariant::kAnalyticOrder2}) {
    EXPECT_EQ(analytic_kernel(v, 0.0, 0.1), 0.0);
    const double small = analytic_kernel(v, 1e-9, 0.1);
    EXPECT_TRUE(std::isfinite(small));
    EXPECT_LT(small, 1e-5);
  }
}

TEST(AnalyticKernel, RejectsNonPositiveSize) {
  EXPECT_THROW(analytic_kernel(KernelVariant::kAnalyticOrder1, 0.1, 0.0), std::invalid_argument);
}

TEST(AnalyticKernel, MatchesBiotSavartQuadrature) {
  const double d = 0.1;
  const Vec2 c{0.0, 0.0};
  const KernelModel k = KernelModel::analytic(KernelVariant::kAnalyticOrder1);
  for (double r : {0.5 * d, d, 2.0 * d, 3.5 * d, 5.0 * d}) {
    const Vec2 x{r * std::cos(0.7), r * std::sin(0.7)};
    const Vec2 quad = test::biot_savart_quadrature(x, c, 1.0, d);
    const Vec2 u = induced_velocity(one_vortex(c, 1.0, d), k, x);
    const double rel = std::hypot(u.x - quad.x, u.y - quad.y) / std::hypot(quad.x, quad.y);
    EXPECT_LT(rel, 1e-3) << "r = " << r;
  }
}

TEST(InducedVelocity, SingleVortexExample) {
  const KernelModel k = KernelModel::analytic(KernelVariant::kAnalyticOrder1);
  const Vec2 u = induced_velocity(one_vortex({0, 0}, 1.0, 0.1), k, Vec2{0.2, 0.0});
  EXPECT_NEAR(u.x, 0.0, 1e-15);
  EXPECT_NEAR(u.y, -(1.0 - std::exp(-4.0)) / (2 * kPi * 0.2), 1e-14);
  EXPECT_NEAR(u.y, -0.7813, 1e-3);
}

TEST(InducedVelocity, ZeroAtVortexCenter) {
  const KernelModel k = KernelModel::analytic(KernelVariant::kAnalyticOrder2);
  const Vec2 u = induced_velocity(one_vortex({0.4, 0.6}, 1.0, 0.1), k, Vec2{0.4, 0.6});
  EXPECT_EQ(u, (Vec2{0.0, 0.0}));
}

TEST(InducedVelocity, SymmetricPairCancels) {
  const KernelModel k = KernelModel::analytic(KernelVariant::kAnalyticOrder1);
  const VortexState s{{{-0.3, 0.0}, {0.3, 0.0}}, {0.7, 0.7}, {0.1, 0.1}};
  const Vec2 u = induced_velocity(s, k, Vec2{0.0, 0.0});
  EXPECT_NEAR(u.x, 0.0, 1e-15);
  EXPECT_NEAR(u.y, 0.0, 1e-15);
}

TEST(InducedVelocity, LinearInStrengths) {
  std::mt19937_64 rng(3);
  for (const KernelModel& k : {KernelModel::analytic(KernelVariant::kAnalyticOrder1),
                               KernelModel::neural(rng)}) {
    VortexState s = random_state(5, 11);
    const Vec2 x{0.43, 0.58};
    const Vec2 u = induced_velocity(s, k, x);
    for (double& w : s.strengths) w *= -2.5;
    const Vec2 v = induced_velocity(s, k, x);
    EXPECT_NEAR(v.x, -2.5 * u.x, 1e-12);
    EXPECT_NEAR(v.y, -2.5 * u.y, 1e-12);
  }
}

TEST(InducedVelocity, TranslationAndRotationEquivariant) {
  std::mt19937_64 rng(5);
  for (const KernelModel& k : {KernelModel::analytic(KernelVariant::kAnalyticOrder2),
                               KernelModel::neural(rng)}) {
    const VortexState s = random_state(6, 12);
    const Vec2 x{0.51, 0.37};
    const Vec2 u = induced_velocity(s, k, x);

    const Vec2 shift{0.3, -0.8};
    VortexState moved = s;
    for (Vec2& p : moved.positions) p = p + shift;
    const Vec2 ut = induced_velocity(moved, k, x + shift);
    EXPECT_NEAR(ut.x, u.x, 1e-12);
    EXPECT_NEAR(ut.y, u.y, 1e-12);

    const double a = 1.1, c = std::cos(a), sn = std::sin(a);
    auto rot = [&](Vec2 p) { return Vec2{c * p.x - sn * p.y, sn * p.x + c * p.y}; };
    VortexState turned = s;
    for (Vec2& p : turned.positions) p = rot(p);
    const Vec2 ur = induced_velocity(turned, k, rot(x));
    const Vec2 expect = rot(u);
    EXPECT_NEAR(ur.x, expect.x, 1e-12);
    EXPECT_NEAR(ur.y, expect.y, 1e-12);
  }
}

TEST(InducedVelocity, AnalyticSingleVortexIsTangential) {
  const KernelModel k = KernelModel::analytic(KernelVariant::kAnalyticOrder1);
  const Vec2 c{0.5, 0.5};
  const auto q = test::random_values(60, 8, 0.0, 1.0);
  for (std::size_t i = 0; i < 30; ++i) {
    const Vec2 x{q[2 * i], q[2 * i + 1]};
    const Vec2 u = induced_velocity(one_vortex(c, 0.9, 0.08), k, x);
    const Vec2 z = x - c;
    EXPECT_NEAR(u.x * z.x + u.y * z.y, 0.0, 1e-14);
  }
}

TEST(InducedVelocityGrid, ZeroStrengthsGiveZeroField) {
  VortexState s = random_state(4, 2);
  for (double& w : s.strengths) w = 0.0;
  const GridField g = induced_velocity_grid(s, KernelModel::analytic(KernelVariant::kAnalyticOrder1),
                                            {16, 16, DomainMap::letterboxed(16, 16)});
  for (double v : g.data()) EXPECT_EQ(v, 0.0);
}

TEST(InducedVelocityGrid, AgreesWithPointQueries) {
  const VortexState s = random_state(3, 6);
  const KernelModel k = KernelModel::analytic(KernelVariant::kAnalyticOrder1);
  const GridGeometry geo{12, 9, DomainMap::letterboxed(12, 9)};
  const GridField g = induced_velocity_grid(s, k, geo);
  for (std::size_t j = 0; j < 9; ++j)
    for (std::size_t i = 0; i < 12; ++i) {
      const Vec2 u = induced_velocity(s, k, geo.cell_center(i, j));
      EXPECT_NEAR(g.at(i, j, 0), u.x, 1e-14);
      EXPECT_NEAR(g.at(i, j, 1), u.y, 1e-14);
    }
}

TEST(InducedVelocityGrid, DivergenceShrinksFourfoldPerRefinement) {
  const VortexState s = one_vortex({0.47, 0.52}, 1.0, 0.1);
  auto rms = [&](std::size_t n) {
    const GridField u = induced_velocity_grid(s, KernelModel::analytic(KernelVariant::kAnalyticOrder1),
                                              {n, n, DomainMap::letterboxed(n, n)});
    const GridField d = divergence_field(u);
    double acc = 0.0;
    for (double v : d.data()) acc += v * v;
    return std::sqrt(acc / static_cast<double>(d.cell_count()));
  };
  const double ratio = rms(64) / rms(128);
  EXPECT_GT(ratio, 3.5);
  EXPECT_LT(ratio, 4.6);
}

TEST(NeuralKernel, FiniteAtOriginWithOuterScale) {
  std::mt19937_64 rng(1);
  const KernelModel k = KernelModel::neural(rng);
  const double d = 0.2;
  const double g0 = neural_kernel(k, 0.0, d);
  EXPECT_TRUE(std::isfinite(g0));
  EXPECT_NEAR(g0, network_oracle(k.n2, 0.0) * k.eta / d, 1e-13);
}

TEST(NeuralKernel, OuterScaleIsEtaOverSize) {
  std::mt19937_64 rng(2);
  const KernelModel k = KernelModel::neural(rng);
  // Doubling both r and delta keeps the network input, so only eta/delta halves.
  EXPECT_NEAR(neural_kernel(k, 0.3, 0.2), 0.5 * neural_kernel(k, 0.15, 0.1), 1e-13);
  EXPECT_NEAR(neural_kernel(k, 0.9, 0.6), neural_kernel(k, 0.15, 0.1) / 6.0, 1e-13);
}

TEST(NeuralKernel, MatchesStepByStepComposition) {
  std::mt19937_64 rng(3);
  const KernelModel k = KernelModel::neural(rng);
  const auto v = test::random_values(40, 21, 0.0, 1.0);
  for (std::size_t i = 0; i < 20; ++i) {
    const double r = 0.5 * v[2 * i], d = 0.03 + v[2 * i + 1];
    const double input = std::pow(r * k.eta / d, 0.3);
    const double expect = k.eta / d * network_oracle(k.n2, input);
    EXPECT_NEAR(neural_kernel(k, r, d), expect, 1e-12 * std::max(1.0, std::abs(expect)));
  }
}

TEST(NeuralKernel, LookupTableTracksNetwork) {
  std::mt19937_64 rng(4);
  KernelModel table = KernelModel::neural(rng);
  KernelModel exact = table;
  exact.lut_knots = 0;
  const VortexState s = random_state(8, 31);
  const auto q = test::random_values(40, 32, 0.0, 1.0);
  double worst = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < 20; ++i) {
    const Vec2 x{q[2 * i], q[2 * i + 1]};
    const Vec2 a = induced_velocity(s, table, x), b = induced_velocity(s, exact, x);
    worst = std::max(worst, std::hypot(a.x - b.x, a.y - b.y));
    scale = std::max(scale, std::hypot(b.x, b.y));
  }
  EXPECT_LT(worst, 1e-5 * scale);
}

namespace {

// Gradient of a weighted velocity sum through the fused op, with respect to
// positions, strengths, sizes, queries and (for the learned kernel) N2.
double induction_grad_error(const KernelModel& model, bool with_net) {
  const VortexState s = random_state(5, 41);
  std::vector<double> pos;
  for (Vec2 p : s.positions) {
    pos.push_back(p.x);
    pos.push_back(p.y);
  }
  std::vector<Tensor> point{Tensor("pos", {5, 2}, pos), Tensor("w", {5, 1}, s.strengths),
                            Tensor("d", {5, 1}, s.sizes),
                            Tensor("q", {7, 2}, test::random_values(14, 42, 0.1, 0.9))};
  const std::size_t fixed = point.size();
  if (with_net)
    for (const Tensor& t : model.n2.params()) point.push_back(t);
  auto fn = [&](Tape& tape, std::span<const Var> x) {
    const BoundKernel bk =
        with_net ? bind_kernel(tape, model, std::vector<Var>(x.begin() + static_cast<std::ptrdiff_t>(fixed), x.end()))
                 : bind_kernel(tape, model, false);
    const VortexVars st{x[0], x[1], x[2]};
    const Var u = induced_velocity(bk, st, x[3]);
    const auto w = test::random_values(14, 43);
    return ad::sum(ad::mul(u, tape.constant(w, {7, 2})));
  };
  ad::GradCheckOptions opt;
  opt.max_coords_per_leaf = 40;
  const auto r = ad::grad_check(fn, point, opt);
  return r.max_rel_error;
}

}  // namespace

TEST(InductionGradient, AnalyticKernels) {
  EXPECT_LT(induction_grad_error(KernelModel::analytic(KernelVariant::kAnalyticOrder1), false), 1e-6);
  EXPECT_LT(induction_grad_error(KernelModel::analytic(KernelVariant::kAnalyticOrder2), false), 1e-6);
}

TEST(InductionGradient, LearnedKernelExactAndTabulated) {
  std::mt19937_64 rng(6);
  KernelModel k = KernelModel::neural(rng);
  EXPECT_LT(induction_grad_error(k, true), 1e-4);
  k.lut_knots = 0;
  EXPECT_LT(induction_grad_error(k, true), 1e-4);
}

TEST(NeuralKernelTape, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  const KernelModel k = KernelModel::neural(rng);
  std::vector<Tensor> point{Tensor("r", {4, 1}, {0.0, 0.05, 0.2, 0.6}),
                            Tensor("d", {4, 1}, {0.1, 0.3, 0.2, 0.05})};
  for (const Tensor& t : k.n2.params()) point.push_back(t);
  auto fn = [&](Tape& tape, std::span<const Var> x) {
    BoundKernel bk;
    bk.variant = KernelVariant::kNeural;
    bk.eta = k.eta;
    bk.net = &k.n2;
    bk.n2.assign(x.begin() + 2, x.end());
    return ad::sum(neural_kernel(bk, x[0] + 0.0, x[1]) * tape.constant(1.0));
  };
  // r = 0 is the non-smooth point of r^0.3; skip its r coordinate.
  point[0].data[0] = 0.01;
  ad::GradCheckOptions opt;
  opt.max_coords_per_leaf = 60;
  const auto r = ad::grad_check(fn, point, opt);
  EXPECT_LT(r.max_rel_error, 1e-4) << "leaf " << r.worst_leaf << " index " << r.worst_index << " analytic "
                                   << r.worst_analytic << " numeric " << r.worst_numeric;
}

// --------------------------------------------------------------------------

TEST(Trajectory, StrengthsAndSizesAreTimeInvariant) {
  std::mt19937_64 rng(8);
  TrajectoryModel m = TrajectoryModel::create(4, 1.0, rng);
  m.omega_logits.data = {0.1, -0.4, 1.0, 2.0};
  const VortexState a = trajectory_eval(m, 0.0), b = trajectory_eval(m, 1.0);
  EXPECT_EQ(a.strengths, b.strengths);
  EXPECT_EQ(a.sizes, b.sizes);
  EXPECT_NE(a.positions, b.positions);
}

TEST(Trajectory, VelocityMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  const TrajectoryModel m = TrajectoryModel::create(16, 0.58, rng);
  const double h = 1e-6;
  for (double t : {0.0, 0.2, 0.41, 0.58}) {
    const auto v = trajectory_velocity(m, t);
    const auto p1 = trajectory_eval(m, t + h).positions, p0 = trajectory_eval(m, t - h).positions;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double fx = (p1[i].x - p0[i].x) / (2 * h), fy = (p1[i].y - p0[i].y) / (2 * h);
      EXPECT_LT(ad::relative_error(v[i].x, fx, 1e-3), 1e-5);
      EXPECT_LT(ad::relative_error(v[i].y, fy, 1e-3), 1e-5);
    }
  }
}

TEST(Trajectory, ZeroHeadWeightsGiveZeroVelocity) {
  std::mt19937_64 rng(10);
  TrajectoryModel m = TrajectoryModel::create(3, 1.0, rng);
  std::fill(m.n1.head_weight().data.begin(), m.n1.head_weight().data.end(), 0.0);
  for (const Vec2 v : trajectory_velocity(m, 0.3)) EXPECT_EQ(v, (Vec2{0.0, 0.0}));
}

TEST(Trajectory, InitialLayoutIsCeilSqrtGrid) {
  const auto four = initial_layout(4);
  ASSERT_EQ(four.size(), 4u);
  EXPECT_EQ(four[0], (Vec2{0.25, 0.25}));
  EXPECT_EQ(four[3], (Vec2{0.75, 0.75}));
  const auto sixteen = initial_layout(16);
  const auto grid = grid_centers(4, 4);
  EXPECT_EQ(sixteen, grid);
  const auto five = initial_layout(5);
  ASSERT_EQ(five.size(), 5u);
  EXPECT_EQ(five[4], grid_centers(3, 3)[4]);
}

TEST(KernelVariant, NamesRoundTrip) {
  for (auto v : {KernelVariant::kAnalyticOrder1, KernelVariant::kAnalyticOrder2, KernelVariant::kNeural})
    EXPECT_EQ(parse_kernel_variant(to_string(v)), v);
  EXPECT_THROW(parse_kernel_variant("gaussian"), std::invalid_argument);
}

TEST(VortexState, ValidateRejectsBadInput) {
  VortexState s = one_vortex({0.5, 0.5}, 1.0, 0.1);
  s.sizes.push_back(0.2);
  EXPECT_THROW(s.validate(), std::invalid_argument);
  VortexState t = one_vortex({0.5, std::nan("")}, 1.0, 0.1);
  EXPECT_THROW(t.validate(), std::invalid_argument);
}
