#include "dvp/training.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dvp {

using ad::Tape;
using ad::Tensor;
using ad::Var;

std::string to_string(TrajectoryMode m) {
  return m == TrajectoryMode::kInitialOnly ? "initial-only" : "full";
}

TrajectoryMode parse_trajectory_mode(std::string_view s) {
  if (s == "full") return TrajectoryMode::kFull;
  if (s == "initial-only") return TrajectoryMode::kInitialOnly;
  throw std::invalid_argument("unknown trajectory mode '" + std::string(s) +
                              "' (expected full or initial-only)");
}

std::string to_string(AlignmentMode m) { return m == AlignmentMode::kWindow ? "window" : "start"; }

AlignmentMode parse_alignment_mode(std::string_view s) {
  if (s == "start") return AlignmentMode::kStart;
  if (s == "window") return AlignmentMode::kWindow;
  throw std::invalid_argument("unknown alignment mode '" + std::string(s) +
                              "' (expected start or window)");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("config: " + what); };
  if (n_particles == 0) fail("n_particles must be at least 1");
  if (window == 0) fail("window must be at least 1");
  if (batch == 0) fail("batch must be at least 1");
  if (initial_only_window == 0) fail("initial_only_window must be at least 1");
  const std::pair<const char*, double> rates[] = {
      {"lr_n1", lr_n1}, {"lr_n2", lr_n2}, {"lr_omega", lr_omega}, {"lr_delta", lr_delta}};
  for (const auto& [name, v] : rates)
    if (!(v > 0.0) || !std::isfinite(v)) fail(std::string(name) + " must be positive");
  if (!(alignment_weight >= 0.0) || !std::isfinite(alignment_weight))
    fail("alignment_weight must be non-negative");
  if (!(lr_decay_factor > 0.0)) fail("lr_decay_factor must be positive");
  if (!(epsilon > 0.0)) fail("epsilon must be positive");
  if (!(eta > 0.0)) fail("eta must be positive");
  if (!(dt > 0.0) || !std::isfinite(dt)) fail("dt must be positive");
  if (kernel_lut_knots == 1) fail("kernel_lut_knots must be 0 or at least 2");
}

std::vector<ParamGroup> optimizer_groups(const TrajectoryModel& trajectory,
                                         const KernelModel& kernel, const TrainConfig& config) {
  std::vector<ParamGroup> groups;
  groups.emplace_back("n1", config.lr_n1, trajectory.n1.params());
  if (kernel.is_neural()) groups.emplace_back("n2", config.lr_n2, kernel.n2.params());
  groups.emplace_back("omega", config.lr_omega, std::vector<Tensor>{trajectory.omega_logits});
  groups.emplace_back("delta", config.lr_delta, std::vector<Tensor>{trajectory.delta_logits});
  return groups;
}

KernelModel make_kernel(const TrainConfig& config, std::mt19937_64& rng) {
  if (config.kernel != KernelVariant::kNeural) return KernelModel::analytic(config.kernel);
  return KernelModel::neural(rng, config.eta, config.kernel_lut_knots);
}

namespace {

constexpr double kPretrainTolerance = 1e-3;

std::vector<double> flatten(std::span<const Vec2> points) {
  std::vector<double> out;
  out.reserve(2 * points.size());
  for (Vec2 p : points) {
    out.push_back(p.x);
    out.push_back(p.y);
  }
  return out;
}

PretrainReport pretrain_residuals(const TrajectoryModel& model, std::span<const double> target) {
  constexpr int kSamples = 33;
  double pos = 0.0, vel = 0.0;
  for (int s = 0; s < kSamples; ++s) {
    const double t = model.t_end * s / (kSamples - 1);
    const auto state = trajectory_eval(model, t);
    const auto v = trajectory_velocity(model, t);
    for (std::size_t i = 0; i < model.count; ++i) {
      pos += std::pow(state.positions[i].x - target[2 * i], 2) +
             std::pow(state.positions[i].y - target[2 * i + 1], 2);
      vel += v[i].x * v[i].x + v[i].y * v[i].y;
    }
  }
  const double n = static_cast<double>(kSamples * 2 * model.count);
  PretrainReport r;
  r.position_rms = std::sqrt(pos / n);
  r.velocity_rms = std::sqrt(vel / n);
  r.converged = r.position_rms < kPretrainTolerance && r.velocity_rms < kPretrainTolerance;
  return r;
}

Var masked_sq_sum(Var diff, Var weights) {
  return ad::sum(ad::square(weights.valid() ? diff * weights : diff));
}

}  // namespace

PretrainReport pretrain_trajectory(TrajectoryModel& model, const TrainConfig& config,
                                   std::mt19937_64& rng) {
  const auto target = flatten(initial_layout(model.count));
  ParamGroup group("n1", config.lr_n1, model.n1.params());
  std::uniform_real_distribution<double> when(0.0, model.t_end);
  const std::size_t b = config.batch;
  for (std::size_t it = 0; it < config.pretrain_iterations; ++it) {
    Tape tape;
    const auto bound = model.n1.bind(tape, true);
    std::vector<double> times(b);
    for (double& t : times) t = model.t_end > 0.0 ? when(rng) : 0.0;
    const Var ts = tape.constant(std::move(times), {b, 1});
    const Var ones = tape.constant(std::vector<double>(b, 1.0), {b, 1});
    auto [pos, vel] = model.n1.forward_tangent(bound, ts, ones);
    const Var goal = tape.constant(target, {1, target.size()});
    const Var loss = ad::mean(ad::square(pos - goal)) + ad::mean(ad::square(vel));
    tape.backward(loss);
    std::vector<std::vector<double>> grads;
    grads.reserve(bound.size());
    for (const Var& v : bound) grads.push_back(tape.grad(v));
    if (!std::isfinite(loss.item()))
      throw NumericalError("non-finite loss during pretraining at iteration " + std::to_string(it) +
                           " (parameter group n1)");
    adam_step(group, grads,
              lr_schedule(static_cast<std::int64_t>(it),
                          static_cast<std::int64_t>(config.lr_decay_iteration),
                          config.lr_decay_factor));
    model.n1.params() = group.params;
  }
  return pretrain_residuals(model, target);
}

WindowLoss window_loss(const BoundTrajectory& trajectory, const BoundKernel& kernel,
                       std::span<const GridField> video, std::size_t start, std::size_t steps,
                       const TrainConfig& config, const MaskField* mask) {
  if (steps == 0) throw std::invalid_argument("window_loss: window must be at least 1");
  if (start + steps >= video.size())
    throw std::invalid_argument("window_loss: window [" + std::to_string(start) + ", " +
                                std::to_string(start + steps) + "] exceeds the " +
                                std::to_string(video.size()) + "-frame video");
  Tape& tape = trajectory.omega_logits.tape();
  const GridGeometry geometry = video[start].geometry();
  const std::size_t cells = geometry.cell_count();
  const std::size_t channels = video[start].channels();
  const Var centers = cell_centers(tape, geometry);
  Var weights;
  double included = static_cast<double>(cells * channels);
  if (mask) {
    weights = tape.constant(mask->weights(), {cells, 1});
    included = static_cast<double>(mask->fluid_count() * channels);
  }
  const bool align = config.alignment_weight > 0.0;
  const double t0 = static_cast<double>(start) * config.dt;

  TrajectorySample sample = sample_trajectory(trajectory, t0, align);
  VortexVars state = sample.state;
  Var image = tape.constant(std::vector<double>(video[start].data().begin(), video[start].data().end()),
                            {cells, channels});
  auto alignment_term = [&](const VortexVars& s, Var particle_velocity) {
    const Var induced = induced_velocity(kernel, s, s.positions);
    return ad::mean(ad::square(particle_velocity - induced));
  };

  Var image_sum;
  Var align_sum;
  std::size_t align_terms = 0;
  if (align) {
    align_sum = alignment_term(state, sample.velocity);
    align_terms = 1;
  }
  for (std::size_t k = 1; k <= steps; ++k) {
    const TapeStep step = rollout_step(kernel, image, state, geometry, centers, config.dt, mask);
    image = step.image;
    state = step.state;
    const GridField& target = video[start + k];
    const Var goal = tape.constant(std::vector<double>(target.data().begin(), target.data().end()),
                                   {cells, channels});
    const Var term = masked_sq_sum(image - goal, weights);
    image_sum = image_sum.valid() ? image_sum + term : term;
    if (align && config.alignment == AlignmentMode::kWindow && k < steps) {
      const double tk = t0 + static_cast<double>(k) * config.dt;
      const Var v = sample_trajectory(trajectory, tk, true).velocity;
      align_sum = align_sum + alignment_term(state, v);
      ++align_terms;
    }
  }
  WindowLoss out;
  out.image = ad::scale(image_sum, 1.0 / (included * static_cast<double>(steps)));
  if (align) {
    out.alignment = ad::scale(align_sum, 1.0 / static_cast<double>(align_terms));
    out.total = out.image + out.alignment * config.alignment_weight;
  } else {
    out.alignment = tape.constant(0.0);
    out.total = out.image;
  }
  return out;
}

namespace {

struct Batch {
  std::vector<std::size_t> starts;
  std::size_t steps = 0;
};

void write_back(const std::vector<ParamGroup>& groups, TrajectoryModel& traj, KernelModel& kernel) {
  for (const ParamGroup& g : groups) {
    if (g.name == "n1") traj.n1.params() = g.params;
    else if (g.name == "n2") kernel.n2.params() = g.params;
    else if (g.name == "omega") traj.omega_logits = g.params[0];
    else if (g.name == "delta") traj.delta_logits = g.params[0];
  }
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::string rng_text(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void validate_video(std::span<const GridField> video, std::size_t needed) {
  if (video.size() < needed)
    throw std::invalid_argument("training needs at least " + std::to_string(needed) +
                                " frames, got " + std::to_string(video.size()));
  for (const GridField& f : video)
    if (!f.same_shape(video[0]) || !(f.domain() == video[0].domain()))
      throw std::invalid_argument("training: all frames must share resolution and channels");
}

// `config` is what the checkpoint records; `loss_config` shapes the loss.
TrainResult run_training(std::span<const GridField> video, const MaskField* mask,
                         const TrainConfig& config, const TrainConfig& loss_config,
                         const TrainOptions& options,
                         const std::function<Batch(std::mt19937_64&)>& draw) {
  if (mask && (mask->sdf.width() != video[0].width() || mask->sdf.height() != video[0].height()))
    throw std::invalid_argument("training: mask resolution differs from the video");
  TrainResult result;
  Checkpoint& ck = result.checkpoint;
  std::mt19937_64 rng(config.seed);
  std::vector<ParamGroup> groups;
  if (options.resume) {
    ck = *options.resume;
    TrainConfig expected = ck.config;
    expected.iterations = config.iterations;
    if (!(expected == config))
      throw std::invalid_argument("resume: checkpoint config differs from the requested run");
    if (ck.frames != video.size())
      throw std::invalid_argument("resume: checkpoint was trained on a different frame count");
    ck.config = config;
    std::istringstream is(ck.rng_state);
    is >> rng;
    if (!is) throw std::invalid_argument("resume: corrupt random generator state");
    groups = optimizer_groups(ck.trajectory, ck.kernel, config);
    if (ck.optimizer.size() != groups.size())
      throw std::invalid_argument("resume: optimizer state does not match the model");
    for (std::size_t g = 0; g < groups.size(); ++g) {
      groups[g].first_moment = ck.optimizer[g].first_moment;
      groups[g].second_moment = ck.optimizer[g].second_moment;
      groups[g].step = ck.optimizer[g].step;
    }
  } else {
    ck.config = config;
    ck.frames = video.size();
    ck.trajectory = TrajectoryModel::create(config.n_particles, ck.t_end(), rng, config.epsilon);
    ck.kernel = make_kernel(config, rng);
    ck.pretrain = pretrain_trajectory(ck.trajectory, config, rng);
    groups = optimizer_groups(ck.trajectory, ck.kernel, config);
  }

  const bool neural = ck.kernel.is_neural();
  for (std::size_t it = ck.iteration; it < config.iterations; ++it) {
    const Batch batch = draw(rng);
    Tape tape;
    const BoundTrajectory traj = bind_trajectory(tape, ck.trajectory, true);
    const BoundKernel kernel = bind_kernel(tape, ck.kernel, neural);
    Var total, image, alignment;
    for (std::size_t start : batch.starts) {
      const WindowLoss w = window_loss(traj, kernel, video, start, batch.steps, loss_config, mask);
      total = total.valid() ? total + w.total : w.total;
      image = image.valid() ? image + w.image : w.image;
      alignment = alignment.valid() ? alignment + w.alignment : w.alignment;
    }
    const double inv = 1.0 / static_cast<double>(batch.starts.size());
    total = ad::scale(total, inv);
    tape.backward(total);

    std::vector<std::vector<std::vector<double>>> grads(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const std::string& name = groups[g].name;
      std::vector<Var> vars;
      if (name == "n1") vars = traj.n1;
      else if (name == "n2") vars = kernel.n2;
      else if (name == "omega") vars = {traj.omega_logits};
      else vars = {traj.delta_logits};
      for (const Var& v : vars) grads[g].push_back(tape.grad(v));
    }

    const double loss = total.item();
    std::string offender;
    for (std::size_t g = 0; g < groups.size() && offender.empty(); ++g)
      for (const Tensor& p : groups[g].params)
        if (!all_finite(p.data)) offender = groups[g].name;
    for (std::size_t g = 0; g < groups.size() && offender.empty(); ++g)
      for (const auto& gr : grads[g])
        if (!all_finite(gr)) offender = groups[g].name;
    if (!std::isfinite(loss) || !offender.empty())
      throw NumericalError("non-finite " + std::string(std::isfinite(loss) ? "gradient" : "loss") +
                           " at iteration " + std::to_string(it) + " (parameter group " +
                           (offender.empty() ? std::string("unknown") : offender) + ")");

    const double mult = lr_schedule(static_cast<std::int64_t>(it),
                                    static_cast<std::int64_t>(config.lr_decay_iteration),
                                    config.lr_decay_factor);
    for (std::size_t g = 0; g < groups.size(); ++g) adam_step(groups[g], grads[g], mult);
    write_back(groups, ck.trajectory, ck.kernel);

    LossRecord rec{it, image.item() * inv, alignment.item() * inv, mult};
    result.log.push_back(rec);
    ck.iteration = it + 1;
    ck.final_image_loss = rec.image_loss;
    ck.final_alignment_loss = rec.alignment_loss;
    if (options.on_iteration) options.on_iteration(rec);
  }
  ck.optimizer = std::move(groups);
  ck.rng_state = rng_text(rng);
  return result;
}

}  // namespace

TrainResult train(std::span<const GridField> video, const MaskField* mask,
                  const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  if (config.mode == TrajectoryMode::kInitialOnly)
    return train_initial_only(video, mask, config, options);
  validate_video(video, config.window + 1);
  const std::size_t last_start = video.size() - 1 - config.window;
  return run_training(video, mask, config, config, options, [&](std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, last_start);
    Batch b;
    b.steps = config.window;
    for (std::size_t k = 0; k < config.batch; ++k) b.starts.push_back(pick(rng));
    return b;
  });
}

TrainResult train_initial_only(std::span<const GridField> video, const MaskField* mask,
                               const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  validate_video(video, 2);
  TrainConfig cfg = config;
  cfg.mode = TrajectoryMode::kInitialOnly;
  const std::size_t steps = std::min(cfg.initial_only_window, video.size() - 1);
  // Only the state at t = 0 is meaningful, so the trajectory velocity term is dropped.
  TrainConfig loss_cfg = cfg;
  loss_cfg.alignment_weight = 0.0;
  return run_training(video, mask, cfg, loss_cfg, options, [steps](std::mt19937_64&) {
    return Batch{{0}, steps};
  });
}

VortexState state_at(const Checkpoint& checkpoint, double t) {
  if (checkpoint.config.mode == TrajectoryMode::kFull) return trajectory_eval(checkpoint.trajectory, t);
  const double dt = checkpoint.config.dt;
  VortexState s = trajectory_eval(checkpoint.trajectory, 0.0);
  const auto steps = static_cast<std::size_t>(std::floor(t / dt + 1e-9));
  for (std::size_t k = 0; k < steps; ++k) s = advance_particles(s, checkpoint.kernel, dt);
  const double rest = t - static_cast<double>(steps) * dt;
  if (rest > 1e-12) s = advance_particles(s, checkpoint.kernel, rest);
  return s;
}

GridField infer_velocity(const Checkpoint& checkpoint, double t, const GridGeometry& geometry) {
  const double t_end = checkpoint.t_end();
  if (!std::isfinite(t) || t < -1e-12 || t > t_end + 1e-9) {
    std::ostringstream os;
    os << "infer: t = " << t << " is outside the observed range [0, " << t_end << "]";
    throw std::invalid_argument(os.str());
  }
  return induced_velocity_grid(state_at(checkpoint, std::clamp(t, 0.0, t_end)), checkpoint.kernel,
                               geometry);
}

RolloutResult predict(const Checkpoint& checkpoint, const GridField& last_frame,
                      std::size_t n_steps, const MaskField* mask) {
  return rollout(last_frame, state_at(checkpoint, checkpoint.t_end()), checkpoint.kernel, n_steps,
                 checkpoint.config.dt, mask);
}

}  // namespace dvp
