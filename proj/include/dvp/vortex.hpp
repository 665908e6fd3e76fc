#pragma once

/// \file
/// Latent vortex particles and the vortex-to-velocity mapping.
///
/// A particle carries a position, a strength in [-1, 1] and a size in
/// (eps, 1 + eps). The induced velocity at x is
///
///     u(x) = sum_i  g(|x - x_i|, delta_i) * omega_i * perp(x - x_i)
///
/// with perp(z) = (z_y, -z_x) / |z| and g either a mollified Biot-Savart
/// magnitude or the learned kernel (eta / delta) * f((r * eta / delta)^0.3),
/// where f is a sine residual network. Coincident points contribute nothing.

#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dvp/autodiff.hpp"
#include "dvp/field.hpp"
#include "dvp/sine_net.hpp"

namespace dvp {

inline constexpr double kDefaultSizeEpsilon = 0.03;
inline constexpr double kSingularRadius = 1e-12;
inline constexpr double kKernelRadiusExponent = 0.3;

struct VortexState {
  std::vector<Vec2> positions;
  std::vector<double> strengths;
  std::vector<double> sizes;

  std::size_t size() const { return positions.size(); }
  /// Throws std::invalid_argument on mismatched lengths or non-finite entries.
  void validate() const;

  friend bool operator==(const VortexState&, const VortexState&) = default;
};

struct DecodedParams {
  std::vector<double> strengths;
  std::vector<double> sizes;
};

/// strengths = sin(omega_logits), sizes = sigmoid(delta_logits) + epsilon.
DecodedParams decode_params(std::span<const double> omega_logits,
                            std::span<const double> delta_logits,
                            double epsilon = kDefaultSizeEpsilon);

/// Unit vector (z_y, -z_x) / |z|. Requires |z| > 0.
Vec2 perp_direction(Vec2 z);

enum class KernelVariant { kAnalyticOrder1, kAnalyticOrder2, kNeural };

std::string to_string(KernelVariant v);
KernelVariant parse_kernel_variant(std::string_view s);

/// Mollified Biot-Savart magnitude M(r/delta) / (2 pi r), 0 at r = 0.
/// Order 1: M = 1 - exp(-rho^2). Order 2: M = 1 - (1 - rho^2) exp(-rho^2).
double analytic_kernel(KernelVariant variant, double r, double delta);

/// Induction kernel. For the neural variant the residual blocks map the
/// reparametrized radius to a scalar; `lut_knots > 0` evaluates them through
/// a cubic Hermite table over [0, lut_max_input] rebuilt from the current
/// weights (values and exact slopes at each knot), `lut_knots == 0` runs the
/// network per particle/query pair.
struct KernelModel {
  KernelVariant variant = KernelVariant::kNeural;
  double eta = 0.3;
  SineResNet n2;
  std::size_t lut_knots = 128;
  double lut_max_input = 3.0;

  static KernelModel analytic(KernelVariant variant);
  static KernelModel neural(std::mt19937_64& rng, double eta = 0.3, std::size_t lut_knots = 128);
  bool is_neural() const { return variant == KernelVariant::kNeural; }
};

/// Learned magnitude at one (r, delta), evaluated exactly through the network.
double neural_kernel(const KernelModel& kernel, double r, double delta);

/// Strength/size logits plus the position network t -> 2n coordinates.
struct TrajectoryModel {
  std::size_t count = 0;
  ad::Tensor omega_logits;
  ad::Tensor delta_logits;
  SineResNet n1;
  double t_end = 1.0;
  double epsilon = kDefaultSizeEpsilon;

  /// Zero logits and a freshly initialized position network.
  static TrajectoryModel create(std::size_t count, double t_end, std::mt19937_64& rng,
                                double epsilon = kDefaultSizeEpsilon);
};

VortexState trajectory_eval(const TrajectoryModel& model, double t);
/// Exact time derivative of the position network at t.
std::vector<Vec2> trajectory_velocity(const TrajectoryModel& model, double t);

Vec2 induced_velocity(const VortexState& state, const KernelModel& kernel, Vec2 x);
std::vector<Vec2> induced_velocity(const VortexState& state, const KernelModel& kernel,
                                   std::span<const Vec2> xs);
/// Direct O(n * cells) summation at every cell center.
GridField induced_velocity_grid(const VortexState& state, const KernelModel& kernel,
                                const GridGeometry& geometry);

// ---------------------------------------------------------------------------
// Tape-level counterparts used for training.

struct VortexVars {
  ad::Var positions;  // [n, 2]
  ad::Var strengths;  // [n, 1]
  ad::Var sizes;      // [n, 1]

  std::size_t size() const { return positions.shape().rows; }
};

VortexVars constant_state(ad::Tape& tape, const VortexState& state);
VortexState read_state(const VortexVars& vars);

struct BoundKernel {
  KernelVariant variant = KernelVariant::kNeural;
  double eta = 0.3;
  const SineResNet* net = nullptr;
  std::vector<ad::Var> n2;
  /// [knots, 2] table of (f, df/ds) when a lookup table is in use.
  ad::Var table;
  std::size_t knots = 0;
  double table_max = 0.0;
};

BoundKernel bind_kernel(ad::Tape& tape, const KernelModel& kernel, bool trainable);
/// Same, with caller-supplied nodes for the network parameters (in
/// kernel.n2.params() order).
BoundKernel bind_kernel(ad::Tape& tape, const KernelModel& kernel, std::vector<ad::Var> n2);

/// Learned magnitude for elementwise r, delta ([N, 1] each), through the network.
ad::Var neural_kernel(const BoundKernel& kernel, ad::Var r, ad::Var delta);

/// Velocity [M, 2] induced at queries [M, 2].
ad::Var induced_velocity(const BoundKernel& kernel, const VortexVars& state, ad::Var queries);

struct BoundTrajectory {
  const TrajectoryModel* model = nullptr;
  ad::Var omega_logits;
  ad::Var delta_logits;
  std::vector<ad::Var> n1;
};

BoundTrajectory bind_trajectory(ad::Tape& tape, const TrajectoryModel& model, bool trainable);

struct TrajectorySample {
  VortexVars state;
  ad::Var velocity;  // [n, 2], invalid unless requested
};

TrajectorySample sample_trajectory(const BoundTrajectory& traj, double t, bool with_velocity);

/// Particle layout for initialization: first n centers of the smallest k x k
/// grid with k^2 >= n tiling [0, extent].
std::vector<Vec2> initial_layout(std::size_t n, Vec2 extent = {1.0, 1.0});

}  // namespace dvp
