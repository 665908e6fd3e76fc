#include "dvp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "dvp/integrators.hpp"

namespace dvp {

std::string to_string(Background b) {
  return b == Background::kColorTiles ? "tiles" : "gradient";
}

Background parse_background(std::string_view s) {
  if (s == "gradient") return Background::kSmoothGradient;
  if (s == "tiles") return Background::kColorTiles;
  throw std::invalid_argument("unknown background '" + std::string(s) +
                              "' (expected gradient or tiles)");
}

void SceneSpec::validate() const {
  if (frames < 1) throw std::invalid_argument("scene: frame count must be at least 1");
  if (resolution < 8) throw std::invalid_argument("scene: resolution must be at least 8");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("scene: dt must be positive");
  if (kernel == KernelVariant::kNeural)
    throw std::invalid_argument("scene: ground truth needs an analytic kernel");
  vortices.validate();
}

SceneSpec SceneSpec::acceptance() {
  SceneSpec s;
  const double lo = 0.3, hi = 0.7;
  s.vortices.positions = {{lo, lo}, {hi, lo}, {lo, hi}, {hi, hi}};
  s.vortices.strengths = {0.8, 0.8, 0.8, 0.8};
  s.vortices.sizes = {0.12, 0.12, 0.12, 0.12};
  return s;
}

GridField background_image(Background kind, std::size_t resolution, std::uint64_t seed) {
  if (resolution < 2) throw std::invalid_argument("background_image: resolution must be >= 2");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  GridField img(resolution, resolution, 3, DomainMap::letterboxed(resolution, resolution));
  auto d = img.data();
  const auto centers = img.cell_centers();

  if (kind == Background::kColorTiles) {
    const std::size_t k = std::uniform_int_distribution<std::size_t>(4, 8)(rng);
    std::vector<double> colors(3 * k * k);
    for (double& c : colors) c = unit(rng);
    for (std::size_t j = 0; j < resolution; ++j)
      for (std::size_t i = 0; i < resolution; ++i) {
        const std::size_t tile = (j * k / resolution) * k + i * k / resolution;
        for (std::size_t c = 0; c < 3; ++c) img.at(i, j, c) = colors[3 * tile + c];
      }
    return img;
  }

  const int waves = std::uniform_int_distribution<int>(3, 5)(rng);
  for (int w = 0; w < waves; ++w) {
    const double angle = 2.0 * std::numbers::pi * unit(rng);
    const double freq = 0.5 + 1.5 * unit(rng);  // cycles across the domain
    const double phase = 2.0 * std::numbers::pi * unit(rng);
    const double color[3] = {unit(rng), unit(rng), unit(rng)};
    const double kx = 2.0 * std::numbers::pi * freq * std::cos(angle);
    const double ky = 2.0 * std::numbers::pi * freq * std::sin(angle);
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const double s = std::sin(kx * centers[k].x + ky * centers[k].y + phase);
      for (std::size_t c = 0; c < 3; ++c) d[3 * k + c] += color[c] * s;
    }
  }
  for (std::size_t c = 0; c < 3; ++c) {
    double lo = d[c], hi = d[c];
    for (std::size_t k = 0; k < centers.size(); ++k) {
      lo = std::min(lo, d[3 * k + c]);
      hi = std::max(hi, d[3 * k + c]);
    }
    for (std::size_t k = 0; k < centers.size(); ++k)
      d[3 * k + c] = hi > lo ? (d[3 * k + c] - lo) / (hi - lo) : 0.5;
  }
  return img;
}

VortexState rk3_particle_step(const VortexState& state, const KernelModel& kernel, double dt) {
  auto shifted = [&](const std::vector<Vec2>& k, double h) {
    VortexState s = state;
    for (std::size_t i = 0; i < s.size(); ++i) s.positions[i] = s.positions[i] + h * k[i];
    return s;
  };
  const auto k1 = induced_velocity(state, kernel, state.positions);
  const VortexState s2 = shifted(k1, 0.5 * dt);
  const auto k2 = induced_velocity(s2, kernel, s2.positions);
  const VortexState s3 = shifted(k2, 0.75 * dt);
  const auto k3 = induced_velocity(s3, kernel, s3.positions);
  VortexState next = state;
  for (std::size_t i = 0; i < next.size(); ++i)
    next.positions[i] = next.positions[i] + (dt / 9.0) * (2.0 * k1[i] + 3.0 * k2[i] + 4.0 * k3[i]);
  return next;
}

SceneData generate(const SceneSpec& scene) {
  scene.validate();
  const KernelModel kernel = KernelModel::analytic(scene.kernel);
  SceneData out;
  GridField frame = background_image(scene.background, scene.resolution, scene.seed);
  const GridGeometry geometry = frame.geometry();
  VortexState state = scene.vortices;
  GridField u = induced_velocity_grid(state, kernel, geometry);
  for (std::size_t f = 0;; ++f) {
    out.frames.push_back(frame);
    out.velocities.push_back(u);
    out.states.push_back(state);
    if (f + 1 == scene.frames) break;
    frame = bfecc_advect(frame, u, scene.dt);
    state = rk3_particle_step(state, kernel, scene.dt);
    u = induced_velocity_grid(state, kernel, geometry);
  }
  return out;
}

}  // namespace dvp
