#include "dvp/integrators.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace dvp {

using ad::Tape;
using ad::Var;

std::vector<double> MaskField::weights() const {
  std::vector<double> w(sdf.cell_count());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = is_fluid(k) ? 1.0 : 0.0;
  return w;
}

std::size_t MaskField::fluid_count() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < sdf.cell_count(); ++k) n += is_fluid(k) ? 1 : 0;
  return n;
}

namespace {

void require_same_grid(const GridField& a, const GridField& b, const char* what) {
  if (a.width() != b.width() || a.height() != b.height())
    throw FieldError(std::string(what) + ": resolution mismatch (" + std::to_string(a.width()) +
                     "x" + std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                     std::to_string(b.height()) + ")");
}

void check_velocity(const GridField& field, const GridField& vel, const MaskField* mask,
                    const char* what) {
  if (vel.channels() != 2) throw FieldError(std::string(what) + ": velocity must have 2 channels");
  require_same_grid(field, vel, what);
  if (mask) require_same_grid(field, mask->sdf, what);
}

Vec2 sample_velocity(const GridField& vel, Vec2 p) {
  std::array<double, 2> v{};
  sample_bilinear(vel, p, v);
  return {v[0], v[1]};
}

std::vector<Vec2> departure_points(const GridField& vel, double dt) {
  auto centers = vel.cell_centers();
  for (Vec2& c : centers) c = rk3_backtrace(vel, c, dt);
  return centers;
}

GridField resample(const GridField& field, std::span<const Vec2> points) {
  GridField out(field.width(), field.height(), field.channels(), field.domain());
  const std::size_t c = field.channels();
  auto d = out.data();
  for (std::size_t k = 0; k < points.size(); ++k) sample_bilinear(field, points[k], d.subspan(k * c, c));
  return out;
}

void keep_outside_mask(GridField& out, const GridField& input, const MaskField* mask) {
  if (!mask) return;
  const std::size_t c = input.channels();
  for (std::size_t k = 0; k < input.cell_count(); ++k)
    if (!mask->is_fluid(k))
      for (std::size_t q = 0; q < c; ++q) out.data()[k * c + q] = input.data()[k * c + q];
}

}  // namespace

Vec2 rk3_backtrace(const GridField& vel, Vec2 x, double dt) {
  const Vec2 k1 = sample_velocity(vel, x);
  const Vec2 k2 = sample_velocity(vel, x - (0.5 * dt) * k1);
  const Vec2 k3 = sample_velocity(vel, x - (0.75 * dt) * k2);
  return x - (dt / 9.0) * (2.0 * k1 + 3.0 * k2 + 4.0 * k3);
}

GridField semi_lagrangian(const GridField& field, const GridField& vel, double dt,
                          const MaskField* mask) {
  check_velocity(field, vel, mask, "semi_lagrangian");
  GridField out = resample(field, departure_points(vel, dt));
  keep_outside_mask(out, field, mask);
  return out;
}

GridField bfecc_advect(const GridField& field, const GridField& vel, double dt,
                       const MaskField* mask) {
  check_velocity(field, vel, mask, "bfecc_advect");
  const auto fwd = departure_points(vel, dt);
  const auto bwd = departure_points(vel, -dt);
  const GridField there = resample(field, fwd);
  const GridField back = resample(there, bwd);
  GridField corrected = field;
  {
    auto d = corrected.data();
    const auto f = field.data();
    const auto b = back.data();
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = f[k] + 0.5 * (f[k] - b[k]);
  }
  GridField out = resample(corrected, fwd);
  const std::size_t c = field.channels();
  const std::size_t w = field.width();
  const auto f = field.data();
  auto d = out.data();
  for (std::size_t k = 0; k < fwd.size(); ++k) {
    const BilinearStencil s = field.stencil(fwd[k]);
    const std::size_t base = (s.j0 * w + s.i0) * c;
    const std::size_t idx[4] = {base, base + c, base + w * c, base + w * c + c};
    for (std::size_t q = 0; q < c; ++q) {
      double lo = f[idx[0] + q], hi = lo;
      for (std::size_t a = 1; a < 4; ++a) {
        lo = std::min(lo, f[idx[a] + q]);
        hi = std::max(hi, f[idx[a] + q]);
      }
      d[k * c + q] = std::clamp(d[k * c + q], lo, hi);
    }
  }
  keep_outside_mask(out, field, mask);
  return out;
}

VortexState advance_particles(const VortexState& state,
                              const std::function<Vec2(Vec2)>& velocity, double dt) {
  VortexState next = state;
  for (Vec2& p : next.positions) p = p + dt * velocity(p);
  return next;
}

VortexState advance_particles(const VortexState& state, const KernelModel& kernel, double dt) {
  const auto u = induced_velocity(state, kernel, state.positions);
  VortexState next = state;
  for (std::size_t i = 0; i < next.size(); ++i) next.positions[i] = next.positions[i] + dt * u[i];
  return next;
}

void apply_mask(GridField& vel, const MaskField& mask) {
  require_same_grid(vel, mask.sdf, "apply_mask");
  const std::size_t c = vel.channels();
  for (std::size_t k = 0; k < vel.cell_count(); ++k)
    if (!mask.is_fluid(k))
      for (std::size_t q = 0; q < c; ++q) vel.data()[k * c + q] = 0.0;
}

RolloutResult rollout(const GridField& image, const VortexState& initial,
                      const KernelModel& kernel, std::size_t n_steps, double dt,
                      const MaskField* mask) {
  if (mask) require_same_grid(image, mask->sdf, "rollout");
  RolloutResult out;
  GridField frame = image;
  VortexState state = initial;
  auto velocity_of = [&](const VortexState& s) {
    GridField u = induced_velocity_grid(s, kernel, image.geometry());
    if (mask) apply_mask(u, *mask);
    return u;
  };
  GridField u = velocity_of(state);
  out.frames.push_back(frame);
  out.velocities.push_back(u);
  out.states.push_back(state);
  for (std::size_t step = 0; step < n_steps; ++step) {
    frame = bfecc_advect(frame, u, dt, mask);
    state = advance_particles(state, kernel, dt);
    u = velocity_of(state);
    out.frames.push_back(frame);
    out.velocities.push_back(u);
    out.states.push_back(state);
  }
  return out;
}

// ---------------------------------------------------------------------------

Var cell_centers(Tape& tape, const GridGeometry& geometry) {
  const auto centers = geometry.cell_centers();
  std::vector<double> xy(2 * centers.size());
  for (std::size_t k = 0; k < centers.size(); ++k) {
    xy[2 * k] = centers[k].x;
    xy[2 * k + 1] = centers[k].y;
  }
  return tape.constant(std::move(xy), {centers.size(), 2});
}

Var rk3_backtrace(Var vel, const GridGeometry& geometry, Var points, double dt) {
  const Var k1 = ad::bilinear_sample(vel, geometry, points);
  const Var k2 = ad::bilinear_sample(vel, geometry, points - k1 * (0.5 * dt));
  const Var k3 = ad::bilinear_sample(vel, geometry, points - k2 * (0.75 * dt));
  return points - (k1 * 2.0 + k2 * 3.0 + k3 * 4.0) * (dt / 9.0);
}

namespace {

void check_tape_fields(Var field, Var vel, const GridGeometry& geometry, const MaskField* mask,
                       const char* what) {
  if (field.shape().rows != geometry.cell_count() || vel.shape().rows != geometry.cell_count())
    throw FieldError(std::string(what) + ": resolution mismatch");
  if (vel.shape().cols != 2) throw FieldError(std::string(what) + ": velocity must have 2 channels");
  if (mask && mask->sdf.cell_count() != geometry.cell_count())
    throw FieldError(std::string(what) + ": mask resolution mismatch");
}

Var blend_mask(Var advected, Var input, const MaskField* mask) {
  if (!mask) return advected;
  Tape& tape = input.tape();
  auto w = mask->weights();
  std::vector<double> inv(w.size());
  for (std::size_t k = 0; k < w.size(); ++k) inv[k] = 1.0 - w[k];
  const std::size_t n = w.size();
  return advected * tape.constant(std::move(w), {n, 1}) +
         input * tape.constant(std::move(inv), {n, 1});
}

}  // namespace

Var semi_lagrangian(Var field, Var vel, const GridGeometry& geometry, double dt,
                    const MaskField* mask) {
  check_tape_fields(field, vel, geometry, mask, "semi_lagrangian");
  const Var centers = cell_centers(field.tape(), geometry);
  const Var source = rk3_backtrace(vel, geometry, centers, dt);
  return blend_mask(ad::bilinear_sample(field, geometry, source), field, mask);
}

Var bfecc_advect(Var field, Var vel, const GridGeometry& geometry, double dt,
                 const MaskField* mask) {
  check_tape_fields(field, vel, geometry, mask, "bfecc_advect");
  const Var centers = cell_centers(field.tape(), geometry);
  const Var fwd = rk3_backtrace(vel, geometry, centers, dt);
  const Var bwd = rk3_backtrace(vel, geometry, centers, -dt);
  const Var there = ad::bilinear_sample(field, geometry, fwd);
  const Var back = ad::bilinear_sample(there, geometry, bwd);
  const Var corrected = field + (field - back) * 0.5;
  const Var raw = ad::bilinear_sample(corrected, geometry, fwd);
  const Var lo = ad::stencil_min(field, geometry, fwd);
  const Var hi = ad::stencil_max(field, geometry, fwd);
  return blend_mask(ad::clamp(raw, lo, hi), field, mask);
}

VortexVars advance_particles(const BoundKernel& kernel, const VortexVars& state, double dt) {
  const Var u = induced_velocity(kernel, state, state.positions);
  return {state.positions + u * dt, state.strengths, state.sizes};
}

TapeStep rollout_step(const BoundKernel& kernel, Var image, const VortexVars& state,
                      const GridGeometry& geometry, Var centers, double dt,
                      const MaskField* mask) {
  Var u = induced_velocity(kernel, state, centers);
  if (mask) {
    const std::size_t n = geometry.cell_count();
    u = u * image.tape().constant(mask->weights(), {n, 1});
  }
  TapeStep out;
  out.velocity = u;
  out.image = bfecc_advect(image, u, geometry, dt, mask);
  out.state = advance_particles(kernel, state, dt);
  return out;
}

}  // namespace dvp
