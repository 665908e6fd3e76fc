#include "dvp/vortex.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>

#include "dvp/parallel.hpp"

namespace dvp {

using ad::Shape;
using ad::Tape;
using ad::Var;

void VortexState::validate() const {
  if (strengths.size() != positions.size() || sizes.size() != positions.size())
    throw std::invalid_argument("vortex state: positions/strengths/sizes length mismatch");
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (!std::isfinite(positions[i].x) || !std::isfinite(positions[i].y) ||
        !std::isfinite(strengths[i]) || !std::isfinite(sizes[i]))
      throw std::invalid_argument("vortex state: non-finite entry at particle " + std::to_string(i));
    if (!(sizes[i] > 0.0)) throw std::invalid_argument("vortex state: sizes must be positive");
  }
}

DecodedParams decode_params(std::span<const double> omega_logits,
                            std::span<const double> delta_logits, double epsilon) {
  if (omega_logits.size() != delta_logits.size())
    throw std::invalid_argument("decode_params: strength and size logits differ in length");
  DecodedParams out;
  out.strengths.reserve(omega_logits.size());
  out.sizes.reserve(delta_logits.size());
  for (double w : omega_logits) out.strengths.push_back(std::sin(w));
  for (double d : delta_logits) out.sizes.push_back(1.0 / (1.0 + std::exp(-d)) + epsilon);
  return out;
}

Vec2 perp_direction(Vec2 z) {
  const double r = std::hypot(z.x, z.y);
  return {z.y / r, -z.x / r};
}

std::string to_string(KernelVariant v) {
  switch (v) {
    case KernelVariant::kAnalyticOrder1: return "analytic1";
    case KernelVariant::kAnalyticOrder2: return "analytic2";
    case KernelVariant::kNeural: return "neural";
  }
  return "neural";
}

KernelVariant parse_kernel_variant(std::string_view s) {
  if (s == "analytic1") return KernelVariant::kAnalyticOrder1;
  if (s == "analytic2") return KernelVariant::kAnalyticOrder2;
  if (s == "neural") return KernelVariant::kNeural;
  throw std::invalid_argument("unknown kernel variant '" + std::string(s) +
                              "' (expected analytic1, analytic2 or neural)");
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct ProfileSample {
  double g = 0.0;
  double dg_dr = 0.0;
  double dg_ddelta = 0.0;
  // Table sensitivities: dg / d table[first + q] = weights[q].
  std::size_t first = 0;
  std::size_t count = 0;
  double weights[4] = {0.0, 0.0, 0.0, 0.0};
};

// Mollifier M(rho) and dM/drho.
void mollifier(KernelVariant v, double rho, double& m, double& dm) {
  const double rho2 = rho * rho;
  const double e = std::exp(-rho2);
  if (v == KernelVariant::kAnalyticOrder1) {
    m = -std::expm1(-rho2);
    dm = 2.0 * rho * e;
  } else {
    m = -std::expm1(-rho2) + rho2 * e;
    dm = 2.0 * rho * e * (2.0 - rho2);
  }
}

// Magnitude g(r, delta) with partials; r > kSingularRadius.
struct RadialProfile {
  KernelVariant variant = KernelVariant::kAnalyticOrder1;
  double eta = 0.3;
  std::span<const double> table;
  std::size_t knots = 0;
  double s_max = 0.0;
  double h = 1.0;

  /// Reparametrized radius (r eta / delta)^0.3 for the learned kernel.
  double input(double r, double delta) const {
    return std::pow(r * eta / delta, kKernelRadiusExponent);
  }

  /// Magnitude only; `s` is input(r, delta) for the learned kernel.
  double value(double r, double delta, double s) const {
    if (variant != KernelVariant::kNeural) {
      double m, dm;
      mollifier(variant, r / delta, m, dm);
      return m / (kTwoPi * r);
    }
    const double scale = eta / delta;
    if (s >= s_max) {
      const std::size_t k = knots - 1;
      return scale * (table[2 * k] + table[2 * k + 1] * (s - s_max));
    }
    std::size_t k = static_cast<std::size_t>(s / h);
    if (k > knots - 2) k = knots - 2;
    const double u = (s - static_cast<double>(k) * h) / h;
    const double u2 = u * u, u3 = u2 * u;
    const double* t = &table[2 * k];
    return scale * ((2 * u3 - 3 * u2 + 1) * t[0] + (u3 - 2 * u2 + u) * h * t[1] +
                    (-2 * u3 + 3 * u2) * t[2] + (u3 - u2) * h * t[3]);
  }

  ProfileSample eval(double r, double delta, double s) const {
    ProfileSample out;
    if (variant != KernelVariant::kNeural) {
      const double rho = r / delta;
      double m, dm;
      mollifier(variant, rho, m, dm);
      out.g = m / (kTwoPi * r);
      out.dg_dr = dm / (delta * kTwoPi * r) - m / (kTwoPi * r * r);
      out.dg_ddelta = -dm * rho / (delta * kTwoPi * r);
      return out;
    }
    const double scale = eta / delta;
    double f, df;
    if (s >= s_max) {
      const std::size_t k = knots - 1;
      f = table[2 * k] + table[2 * k + 1] * (s - s_max);
      df = table[2 * k + 1];
      out.first = 2 * k;
      out.count = 2;
      out.weights[0] = 1.0;
      out.weights[1] = s - s_max;
    } else {
      std::size_t k = static_cast<std::size_t>(s / h);
      if (k > knots - 2) k = knots - 2;
      const double u = (s - static_cast<double>(k) * h) / h;
      const double u2 = u * u, u3 = u2 * u;
      const double h00 = 2 * u3 - 3 * u2 + 1, h10 = u3 - 2 * u2 + u;
      const double h01 = -2 * u3 + 3 * u2, h11 = u3 - u2;
      const double d00 = 6 * u2 - 6 * u, d10 = 3 * u2 - 4 * u + 1;
      const double d01 = -6 * u2 + 6 * u, d11 = 3 * u2 - 2 * u;
      const double* t = &table[2 * k];
      f = h00 * t[0] + h10 * h * t[1] + h01 * t[2] + h11 * h * t[3];
      df = (d00 * t[0] + d10 * h * t[1] + d01 * t[2] + d11 * h * t[3]) / h;
      out.first = 2 * k;
      out.count = 4;
      out.weights[0] = h00;
      out.weights[1] = h10 * h;
      out.weights[2] = h01;
      out.weights[3] = h11 * h;
    }
    const double ds_dr = kKernelRadiusExponent * s / r;
    const double ds_ddelta = -kKernelRadiusExponent * s / delta;
    out.g = scale * f;
    out.dg_dr = scale * df * ds_dr;
    out.dg_ddelta = -scale * f / delta + scale * df * ds_ddelta;
    for (std::size_t q = 0; q < out.count; ++q) out.weights[q] *= scale;
    return out;
  }
};

constexpr std::size_t kInductionChunks = 16;

// Fused sum over particles for analytic kernels and the tabulated neural kernel.
Var induction_sum(const BoundKernel& kernel, const VortexVars& state, Var queries) {
  const std::size_t m = queries.shape().rows;
  const std::size_t n = state.size();
  const bool tabulated = kernel.variant == KernelVariant::kNeural;
  RadialProfile profile{kernel.variant, kernel.eta, {}, kernel.knots, kernel.table_max, 1.0};
  if (tabulated) {
    profile.table = kernel.table.value();
    profile.h = kernel.table_max / static_cast<double>(kernel.knots - 1);
  }

  const auto qv = queries.value();
  const auto pv = state.positions.value();
  const auto wv = state.strengths.value();
  const auto dv = state.sizes.value();
  std::vector<double> out(2 * m, 0.0);
  // Reparametrized radii per (query, particle), reused by the adjoint.
  auto radii = std::make_shared<std::vector<double>>(tabulated ? m * n : 0);
  parallel_chunks(m, kInductionChunks, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t q = b; q < e; ++q) {
      double ux = 0.0, uy = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double zx = qv[2 * q] - pv[2 * i];
        const double zy = qv[2 * q + 1] - pv[2 * i + 1];
        const double r = std::sqrt(zx * zx + zy * zy);
        if (r < kSingularRadius) continue;
        double s = 0.0;
        if (tabulated) (*radii)[q * n + i] = s = profile.input(r, dv[i]);
        if (wv[i] == 0.0) continue;
        const double coef = wv[i] * profile.value(r, dv[i], s) / r;
        ux += coef * zy;
        uy -= coef * zx;
      }
      out[2 * q] = ux;
      out[2 * q + 1] = uy;
    }
  });

  std::vector<Var> inputs{queries, state.positions, state.strengths, state.sizes};
  if (tabulated) inputs.push_back(kernel.table);
  Tape& tape = queries.tape();
  return tape.record({m, 2}, std::move(out), inputs,
      [queries, state, profile, tabulated, radii, table = kernel.table, m, n](
          Tape& tape, std::span<const double> g) {
    auto gq = tape.grad_sink(queries);
    auto gp = tape.grad_sink(state.positions);
    auto gw = tape.grad_sink(state.strengths);
    auto gd = tape.grad_sink(state.sizes);
    std::span<double> gt = tabulated ? tape.grad_sink(table) : std::span<double>{};
    const auto qv = queries.value();
    const auto pv = state.positions.value();
    const auto wv = state.strengths.value();
    const auto dv = state.sizes.value();
    const std::size_t table_len = gt.size();
    // Per-chunk partials keep the reduction order fixed.
    std::vector<std::vector<double>> part_p(kInductionChunks), part_w(kInductionChunks),
        part_d(kInductionChunks), part_t(kInductionChunks);
    parallel_chunks(m, kInductionChunks, [&](std::size_t c, std::size_t b, std::size_t e) {
      auto& pp = part_p[c];
      auto& pw = part_w[c];
      auto& pd = part_d[c];
      auto& pt = part_t[c];
      pp.assign(gp.empty() ? 0 : 2 * n, 0.0);
      pw.assign(gw.empty() ? 0 : n, 0.0);
      pd.assign(gd.empty() ? 0 : n, 0.0);
      pt.assign(table_len, 0.0);
      for (std::size_t q = b; q < e; ++q) {
        const double gx = g[2 * q], gy = g[2 * q + 1];
        if (gx == 0.0 && gy == 0.0) continue;
        for (std::size_t i = 0; i < n; ++i) {
          const double zx = qv[2 * q] - pv[2 * i];
          const double zy = qv[2 * q + 1] - pv[2 * i + 1];
          const double r = std::sqrt(zx * zx + zy * zy);
          if (r < kSingularRadius) continue;
          const ProfileSample s = profile.eval(r, dv[i], tabulated ? (*radii)[q * n + i] : 0.0);
          const double w = wv[i];
          const double qk = s.g / r;
          const double proj = gx * zy - gy * zx;
          if (!pw.empty()) pw[i] += qk * proj;
          if (w == 0.0) continue;
          if (!pd.empty()) pd[i] += w * proj * s.dg_ddelta / r;
          if (!pt.empty())
            for (std::size_t k = 0; k < s.count; ++k) pt[s.first + k] += w * proj * s.weights[k] / r;
          const double dq_dr = s.dg_dr / r - s.g / (r * r);
          const double gzx = w * (dq_dr * (zx / r) * proj - gy * qk);
          const double gzy = w * (dq_dr * (zy / r) * proj + gx * qk);
          if (!gq.empty()) {
            gq[2 * q] += gzx;
            gq[2 * q + 1] += gzy;
          }
          if (!pp.empty()) {
            pp[2 * i] -= gzx;
            pp[2 * i + 1] -= gzy;
          }
        }
      }
    });
    auto reduce = [](std::span<double> sink, const std::vector<std::vector<double>>& parts) {
      if (sink.empty()) return;
      for (const auto& p : parts)
        for (std::size_t k = 0; k < p.size(); ++k) sink[k] += p[k];
    };
    reduce(gp, part_p);
    reduce(gw, part_w);
    reduce(gd, part_d);
    reduce(gt, part_t);
  });
}

// Composition of elementary ops, running the network on every pair.
Var induction_exact(const BoundKernel& kernel, const VortexVars& state, Var queries) {
  Tape& tape = queries.tape();
  const std::size_t m = queries.shape().rows;
  const std::size_t n = state.size();
  const Var z = ad::repeat_rows(queries, n) - ad::tile_rows(state.positions, m);
  // Coincident pairs are redirected to a unit offset and masked out.
  const auto zv = z.value();
  std::vector<double> keep(m * n), offset(2 * m * n, 0.0);
  for (std::size_t k = 0; k < m * n; ++k) {
    const bool singular = std::hypot(zv[2 * k], zv[2 * k + 1]) < kSingularRadius;
    keep[k] = singular ? 0.0 : 1.0;
    if (singular) offset[2 * k] = 1.0;
  }
  const Var mask = tape.constant(std::move(keep), {m * n, 1});
  const Var z_safe = z * mask + tape.constant(std::move(offset), {m * n, 2});
  const Var r = ad::sqrt(ad::row_sum(ad::square(z_safe)));
  const Var delta = ad::tile_rows(state.sizes, m);
  const Var omega = ad::tile_rows(state.strengths, m);
  const Var coef = omega * neural_kernel(kernel, r, delta) / r * mask;
  const Var ux = coef * ad::slice_cols(z_safe, 1, 2);
  const Var uy = -(coef * ad::slice_cols(z_safe, 0, 1));
  const Var parts[2] = {ad::row_sum(ad::reshape(ux, {m, n})), ad::row_sum(ad::reshape(uy, {m, n}))};
  return ad::concat_cols(parts);
}

}  // namespace

double analytic_kernel(KernelVariant variant, double r, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("analytic_kernel: size must be positive");
  if (variant == KernelVariant::kNeural)
    throw std::invalid_argument("analytic_kernel: neural variant has no closed form");
  if (r < kSingularRadius) return 0.0;
  double m, dm;
  mollifier(variant, r / delta, m, dm);
  return m / (kTwoPi * r);
}

KernelModel KernelModel::analytic(KernelVariant variant) {
  if (variant == KernelVariant::kNeural)
    throw std::invalid_argument("KernelModel::analytic: expected an analytic variant");
  KernelModel k;
  k.variant = variant;
  k.lut_knots = 0;
  return k;
}

KernelModel KernelModel::neural(std::mt19937_64& rng, double eta, std::size_t lut_knots) {
  if (lut_knots == 1) throw std::invalid_argument("kernel lookup table needs at least 2 knots");
  KernelModel k;
  k.variant = KernelVariant::kNeural;
  k.eta = eta;
  k.lut_knots = lut_knots;
  k.n2 = SineResNet("n2", 1, {40, 40, 40, 40}, 1);
  k.n2.initialize(rng);
  return k;
}

BoundKernel bind_kernel(Tape& tape, const KernelModel& kernel, bool trainable) {
  if (!kernel.is_neural()) return bind_kernel(tape, kernel, std::vector<Var>{});
  return bind_kernel(tape, kernel, kernel.n2.bind(tape, trainable));
}

BoundKernel bind_kernel(Tape& tape, const KernelModel& kernel, std::vector<Var> n2) {
  BoundKernel b;
  b.variant = kernel.variant;
  b.eta = kernel.eta;
  if (!kernel.is_neural()) return b;
  if (n2.size() != kernel.n2.params().size())
    throw std::invalid_argument("bind_kernel: wrong number of network parameters");
  b.net = &kernel.n2;
  b.n2 = std::move(n2);
  if (kernel.lut_knots >= 2) {
    const std::size_t k = kernel.lut_knots;
    const double h = kernel.lut_max_input / static_cast<double>(k - 1);
    std::vector<double> knots(k);
    for (std::size_t i = 0; i < k; ++i) knots[i] = static_cast<double>(i) * h;
    const Var s = tape.constant(std::move(knots), {k, 1});
    const Var ones = tape.constant(std::vector<double>(k, 1.0), {k, 1});
    auto [f, df] = kernel.n2.forward_tangent(b.n2, s, ones);
    const Var cols[2] = {f, df};
    b.table = ad::concat_cols(cols);
    b.knots = k;
    b.table_max = kernel.lut_max_input;
  }
  return b;
}

Var neural_kernel(const BoundKernel& kernel, Var r, Var delta) {
  if (!kernel.net) throw std::invalid_argument("neural_kernel: kernel has no network bound");
  const Var scale = ad::scale(ad::pow(delta, -1.0), kernel.eta);
  const Var s = ad::pow(r * scale, kKernelRadiusExponent);
  return kernel.net->forward(kernel.n2, s) * scale;
}

double neural_kernel(const KernelModel& kernel, double r, double delta) {
  if (!kernel.is_neural()) throw std::invalid_argument("neural_kernel: kernel is analytic");
  Tape tape;
  BoundKernel b;
  b.variant = kernel.variant;
  b.eta = kernel.eta;
  b.net = &kernel.n2;
  b.n2 = kernel.n2.bind(tape, false);
  return neural_kernel(b, tape.constant(r), tape.constant(delta)).item();
}

Var induced_velocity(const BoundKernel& kernel, const VortexVars& state, Var queries) {
  if (queries.shape().cols != 2) throw ad::ShapeError("induced_velocity: queries must be [M x 2]");
  if (kernel.variant == KernelVariant::kNeural && kernel.knots == 0)
    return induction_exact(kernel, state, queries);
  return induction_sum(kernel, state, queries);
}

VortexVars constant_state(Tape& tape, const VortexState& state) {
  const std::size_t n = state.size();
  std::vector<double> pos(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    pos[2 * i] = state.positions[i].x;
    pos[2 * i + 1] = state.positions[i].y;
  }
  return {tape.constant(std::move(pos), {n, 2}), tape.constant(state.strengths, {n, 1}),
          tape.constant(state.sizes, {n, 1})};
}

VortexState read_state(const VortexVars& vars) {
  VortexState s;
  const auto pv = vars.positions.value();
  const std::size_t n = vars.size();
  for (std::size_t i = 0; i < n; ++i) s.positions.push_back({pv[2 * i], pv[2 * i + 1]});
  const auto wv = vars.strengths.value();
  const auto dv = vars.sizes.value();
  s.strengths.assign(wv.begin(), wv.end());
  s.sizes.assign(dv.begin(), dv.end());
  return s;
}

namespace {

Var points_constant(Tape& tape, std::span<const Vec2> xs) {
  std::vector<double> q(2 * xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    q[2 * k] = xs[k].x;
    q[2 * k + 1] = xs[k].y;
  }
  return tape.constant(std::move(q), {xs.size(), 2});
}

}  // namespace

std::vector<Vec2> induced_velocity(const VortexState& state, const KernelModel& kernel,
                                   std::span<const Vec2> xs) {
  state.validate();
  std::vector<Vec2> out(xs.size());
  if (xs.empty() || state.size() == 0) return out;
  Tape tape;
  const BoundKernel b = bind_kernel(tape, kernel, false);
  const Var u = induced_velocity(b, constant_state(tape, state), points_constant(tape, xs));
  const auto uv = u.value();
  for (std::size_t k = 0; k < xs.size(); ++k) out[k] = {uv[2 * k], uv[2 * k + 1]};
  return out;
}

Vec2 induced_velocity(const VortexState& state, const KernelModel& kernel, Vec2 x) {
  return induced_velocity(state, kernel, std::span<const Vec2>(&x, 1))[0];
}

GridField induced_velocity_grid(const VortexState& state, const KernelModel& kernel,
                                const GridGeometry& geometry) {
  const auto centers = geometry.cell_centers();
  const auto u = induced_velocity(state, kernel, centers);
  GridField out(geometry.width, geometry.height, 2, geometry.domain);
  auto d = out.data();
  for (std::size_t k = 0; k < u.size(); ++k) {
    d[2 * k] = u[k].x;
    d[2 * k + 1] = u[k].y;
  }
  return out;
}

TrajectoryModel TrajectoryModel::create(std::size_t count, double t_end, std::mt19937_64& rng,
                                        double epsilon) {
  if (count == 0) throw std::invalid_argument("trajectory model needs at least one particle");
  TrajectoryModel m;
  m.count = count;
  m.omega_logits = ad::Tensor("omega_logits", {count, 1});
  m.delta_logits = ad::Tensor("delta_logits", {count, 1});
  m.n1 = SineResNet("n1", 1, {64, 128, 256}, 2 * count);
  m.n1.initialize(rng);
  m.t_end = t_end;
  m.epsilon = epsilon;
  return m;
}

BoundTrajectory bind_trajectory(Tape& tape, const TrajectoryModel& model, bool trainable) {
  BoundTrajectory b;
  b.model = &model;
  b.omega_logits = trainable ? tape.variable(model.omega_logits) : tape.constant(model.omega_logits);
  b.delta_logits = trainable ? tape.variable(model.delta_logits) : tape.constant(model.delta_logits);
  b.n1 = model.n1.bind(tape, trainable);
  return b;
}

TrajectorySample sample_trajectory(const BoundTrajectory& traj, double t, bool with_velocity) {
  Tape& tape = traj.omega_logits.tape();
  const std::size_t n = traj.model->count;
  const Var time = tape.constant(t);
  const Var time_dot = with_velocity ? tape.constant(1.0) : Var{};
  auto [pos, vel] = traj.model->n1.forward_tangent(traj.n1, time, time_dot);
  TrajectorySample out;
  out.state.positions = ad::reshape(pos, {n, 2});
  out.state.strengths = ad::sin(traj.omega_logits);
  out.state.sizes = ad::sigmoid(traj.delta_logits) + traj.model->epsilon;
  if (with_velocity) out.velocity = ad::reshape(vel, {n, 2});
  return out;
}

VortexState trajectory_eval(const TrajectoryModel& model, double t) {
  Tape tape;
  return read_state(sample_trajectory(bind_trajectory(tape, model, false), t, false).state);
}

std::vector<Vec2> trajectory_velocity(const TrajectoryModel& model, double t) {
  Tape tape;
  const Var v = sample_trajectory(bind_trajectory(tape, model, false), t, true).velocity;
  const auto vv = v.value();
  std::vector<Vec2> out(model.count);
  for (std::size_t i = 0; i < model.count; ++i) out[i] = {vv[2 * i], vv[2 * i + 1]};
  return out;
}

std::vector<Vec2> initial_layout(std::size_t n, Vec2 extent) {
  std::size_t k = 1;
  while (k * k < n) ++k;
  auto centers = grid_centers(k, k, {0.0, 0.0}, extent);
  centers.resize(n);
  return centers;
}

}  // namespace dvp
