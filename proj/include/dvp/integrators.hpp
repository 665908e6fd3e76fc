#pragma once

/// \file
/// Eulerian image transport and Lagrangian particle stepping.
///
/// Images are advected by semi-Lagrangian tracing with a Ralston RK3 backtrace
/// through a gridded velocity, corrected by BFECC and clamped to the extrema of
/// the source stencil. Vortex particles move by forward Euler in their own
/// induced field. Every routine exists twice: on plain fields, and as tape
/// operations for training.

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "dvp/autodiff.hpp"
#include "dvp/field.hpp"
#include "dvp/vortex.hpp"

namespace dvp {

/// Fluid region given as a signed distance field; fluid where the value is negative.
struct MaskField {
  GridField sdf;

  bool is_fluid(std::size_t cell) const { return sdf.data()[cell] < 0.0; }
  /// 1 for fluid cells, 0 elsewhere, one entry per cell.
  std::vector<double> weights() const;
  std::size_t fluid_count() const;
};

struct RolloutResult {
  std::vector<GridField> frames;
  std::vector<GridField> velocities;
  std::vector<VortexState> states;
};

/// x - dt (2 k1 + 3 k2 + 4 k3) / 9 with k1 = u(x), k2 = u(x - dt k1 / 2),
/// k3 = u(x - 3 dt k2 / 4).
Vec2 rk3_backtrace(const GridField& vel, Vec2 x, double dt);

GridField semi_lagrangian(const GridField& field, const GridField& vel, double dt,
                          const MaskField* mask = nullptr);
GridField bfecc_advect(const GridField& field, const GridField& vel, double dt,
                       const MaskField* mask = nullptr);

VortexState advance_particles(const VortexState& state,
                              const std::function<Vec2(Vec2)>& velocity, double dt);
/// Forward Euler in the field the particles induce on each other.
VortexState advance_particles(const VortexState& state, const KernelModel& kernel, double dt);

/// Zeroes velocities outside the fluid region in place.
void apply_mask(GridField& vel, const MaskField& mask);

/// Frames, velocities and states for steps 0..n_steps, on the grid of `image`.
RolloutResult rollout(const GridField& image, const VortexState& initial,
                      const KernelModel& kernel, std::size_t n_steps, double dt,
                      const MaskField* mask = nullptr);

// ---------------------------------------------------------------------------
// Tape counterparts. Fields are [cells, channels] nodes over `geometry`.

ad::Var rk3_backtrace(ad::Var vel, const GridGeometry& geometry, ad::Var points, double dt);
ad::Var semi_lagrangian(ad::Var field, ad::Var vel, const GridGeometry& geometry, double dt,
                        const MaskField* mask = nullptr);
ad::Var bfecc_advect(ad::Var field, ad::Var vel, const GridGeometry& geometry, double dt,
                     const MaskField* mask = nullptr);
VortexVars advance_particles(const BoundKernel& kernel, const VortexVars& state, double dt);

/// Cell centers of `geometry` as a constant [cells, 2] node.
ad::Var cell_centers(ad::Tape& tape, const GridGeometry& geometry);

struct TapeStep {
  ad::Var image;
  ad::Var velocity;
  VortexVars state;
};

/// One rollout step: grid velocity from the current particles, image
/// transport, then particle update.
TapeStep rollout_step(const BoundKernel& kernel, ad::Var image, const VortexVars& state,
                      const GridGeometry& geometry, ad::Var centers, double dt,
                      const MaskField* mask = nullptr);

}  // namespace dvp
