#pragma once

/// \file
/// Fitting a latent vortex system to an image sequence.
///
/// The trajectory network is first pretrained to hold the particles still on
/// a regular layout. Each training iteration then draws a batch of start
/// frames, rolls every window forward from the trajectory state at its start
/// time and penalizes the image mismatch plus the disagreement between the
/// trajectory's own particle velocities and the velocities the particles
/// induce.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dvp/autodiff.hpp"
#include "dvp/field.hpp"
#include "dvp/integrators.hpp"
#include "dvp/optim.hpp"
#include "dvp/vortex.hpp"

namespace dvp {

enum class TrajectoryMode { kFull, kInitialOnly };
/// Which states enter the velocity alignment term: the window's start state
/// only, or every state visited inside the window.
enum class AlignmentMode { kStart, kWindow };

std::string to_string(TrajectoryMode m);
TrajectoryMode parse_trajectory_mode(std::string_view s);
std::string to_string(AlignmentMode m);
AlignmentMode parse_alignment_mode(std::string_view s);

struct TrainConfig {
  std::size_t n_particles = 16;
  std::size_t window = 2;
  std::size_t batch = 4;
  std::size_t iterations = 40000;
  std::size_t pretrain_iterations = 10000;
  double lr_n1 = 3e-4;
  double lr_n2 = 1e-3;
  double lr_omega = 5e-3;
  double lr_delta = 5e-3;
  double alignment_weight = 1e-3;
  std::size_t lr_decay_iteration = 20000;
  double lr_decay_factor = 0.1;
  double epsilon = kDefaultSizeEpsilon;
  double eta = 0.3;
  double dt = 0.01;
  KernelVariant kernel = KernelVariant::kNeural;
  std::uint64_t seed = 0;
  TrajectoryMode mode = TrajectoryMode::kFull;
  /// Steps unrolled from t = 0 in initial-only mode.
  std::size_t initial_only_window = 13;
  AlignmentMode alignment = AlignmentMode::kStart;
  /// Hermite table size for the learned kernel; 0 evaluates the network per pair.
  std::size_t kernel_lut_knots = 128;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PretrainReport {
  double position_rms = 0.0;
  double velocity_rms = 0.0;
  bool converged = false;  // both residuals below 1e-3
};

/// Fits N1 to the stationary layout over t in [0, t_end].
PretrainReport pretrain_trajectory(TrajectoryModel& model, const TrainConfig& config,
                                   std::mt19937_64& rng);

struct WindowLoss {
  ad::Var total;
  ad::Var image;
  ad::Var alignment;
};

/// Loss of one window of `steps` frames starting at frame `start`. Frames are
/// the observed video on a shared grid; `centers` are its cell centers.
WindowLoss window_loss(const BoundTrajectory& trajectory, const BoundKernel& kernel,
                       std::span<const GridField> video, std::size_t start, std::size_t steps,
                       const TrainConfig& config, const MaskField* mask = nullptr);

struct LossRecord {
  std::size_t iteration = 0;
  double image_loss = 0.0;
  double alignment_loss = 0.0;
  double lr_multiplier = 1.0;
};

struct Checkpoint {
  TrainConfig config;
  TrajectoryModel trajectory;
  KernelModel kernel;
  std::size_t iteration = 0;
  /// Observed frame count; t_end = (frames - 1) dt.
  std::size_t frames = 0;
  double final_image_loss = 0.0;
  double final_alignment_loss = 0.0;
  PretrainReport pretrain;
  /// Adam state, one group each for N1, N2 (learned kernel only), strengths, sizes.
  std::vector<ParamGroup> optimizer;
  /// Textual mt19937_64 state after the last iteration.
  std::string rng_state;

  double t_end() const { return static_cast<double>(frames - 1) * config.dt; }
};

struct TrainOptions {
  /// Called after every iteration.
  std::function<void(const LossRecord&)> on_iteration;
  /// Continue a previous run instead of starting from scratch.
  const Checkpoint* resume = nullptr;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossRecord> log;
};

/// Pretraining plus config.iterations optimizer steps. Dispatches on
/// config.mode. Throws NumericalError on a non-finite loss or gradient.
TrainResult train(std::span<const GridField> video, const MaskField* mask,
                  const TrainConfig& config, const TrainOptions& options = {});

/// Initial-condition ablation: every iteration unrolls from frame 0.
TrainResult train_initial_only(std::span<const GridField> video, const MaskField* mask,
                               const TrainConfig& config, const TrainOptions& options = {});

/// Particle state at time t. In initial-only mode the state is integrated
/// forward from t = 0 with the learned dynamics.
VortexState state_at(const Checkpoint& checkpoint, double t);

/// Throws std::invalid_argument when t is outside [0, t_end].
GridField infer_velocity(const Checkpoint& checkpoint, double t, const GridGeometry& geometry);

/// Rolls forward from the last observed frame and the state at t_end.
RolloutResult predict(const Checkpoint& checkpoint, const GridField& last_frame,
                      std::size_t n_steps, const MaskField* mask = nullptr);

/// Adam groups in checkpoint order: n1, n2 (learned kernel only), omega, delta,
/// holding copies of the current parameters and zeroed moments.
std::vector<ParamGroup> optimizer_groups(const TrajectoryModel& trajectory,
                                         const KernelModel& kernel, const TrainConfig& config);

/// Learned kernel or analytic tag described by the config.
KernelModel make_kernel(const TrainConfig& config, std::mt19937_64& rng);

}  // namespace dvp
