#pragma once

/// \file
/// Ground-truth scenes from the discrete vortex method: a background image is
/// carried by the field of a few fixed-strength Gaussian vortices, which move
/// in their mutually induced velocity.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dvp/field.hpp"
#include "dvp/vortex.hpp"

namespace dvp {

enum class Background { kSmoothGradient, kColorTiles };

std::string to_string(Background b);
Background parse_background(std::string_view s);

struct SceneSpec {
  VortexState vortices;
  Background background = Background::kSmoothGradient;
  std::size_t resolution = 64;
  double dt = 0.02;
  std::size_t frames = 90;
  KernelVariant kernel = KernelVariant::kAnalyticOrder1;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument when frames < 1, resolution < 8, the kernel
  /// is not analytic or a vortex is invalid.
  void validate() const;

  /// Four vortices of strength 0.8 and size 0.12 on the corners of a square
  /// of half-width 0.2 centred in the unit domain.
  static SceneSpec acceptance();
};

struct SceneData {
  std::vector<GridField> frames;      // RGB
  std::vector<GridField> velocities;  // velocity at each frame's instant
  std::vector<VortexState> states;
};

/// Unit-square RGB image with values in [0, 1].
GridField background_image(Background kind, std::size_t resolution, std::uint64_t seed);

SceneData generate(const SceneSpec& scene);

/// Ralston RK3 step of all particles in their mutually induced field.
VortexState rk3_particle_step(const VortexState& state, const KernelModel& kernel, double dt);

}  // namespace dvp
