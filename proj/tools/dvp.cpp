// dvp: generate synthetic scenes, fit vortex systems to frame sequences,
// infer velocities, predict future frames and score results.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dvp/eval.hpp"
#include "dvp/io.hpp"
#include "dvp/synth.hpp"
#include "dvp/training.hpp"

namespace fs = std::filesystem;
using namespace dvp;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
};

RunConfig resolve(const CommonArgs& args) {
  RunConfig cfg = args.config_path.empty() ? RunConfig{} : load_config(args.config_path);
  for (const std::string& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_setting(cfg, std::string_view(kv).substr(0, eq), std::string_view(kv).substr(eq + 1));
  }
  cfg.train.validate();
  return cfg;
}

void echo_config(const fs::path& dir, std::string_view command, const RunConfig& cfg) {
  write_file_atomic(dir / (std::string(command) + "_config.txt"), render_config(cfg));
}

std::string_view frame_ext(FrameFormat f) { return f == FrameFormat::kFloat ? ".dvpimg" : ".png"; }

GridField read_frame(const fs::path& p, FrameFormat f) {
  return f == FrameFormat::kFloat ? read_float_image(p) : read_png(p);
}

std::vector<GridField> load_frames(const RunConfig& cfg) {
  const auto paths = numbered_files(cfg.frames_dir, "frame", frame_ext(cfg.frame_format));
  if (paths.empty())
    throw ConfigError("no frame_NNNN" + std::string(frame_ext(cfg.frame_format)) + " files in " +
                      cfg.frames_dir);
  std::size_t count = paths.size();
  if (cfg.observed_frames > 0) {
    if (cfg.observed_frames > paths.size())
      throw ConfigError("observed_frames = " + std::to_string(cfg.observed_frames) + " but only " +
                        std::to_string(paths.size()) + " frames found");
    count = cfg.observed_frames;
  }
  std::vector<GridField> frames;
  for (std::size_t k = 0; k < count; ++k) {
    frames.push_back(read_frame(paths[k], cfg.frame_format));
    if (!frames.back().same_shape(frames.front()))
      throw ConfigError(paths[k].string() + ": frame size differs from frame 0");
  }
  return frames;
}

std::optional<MaskField> load_mask(const RunConfig& cfg, const GridField& like) {
  if (cfg.mask_path.empty()) return std::nullopt;
  MaskField m = read_mask(cfg.mask_path);
  if (m.sdf.width() != like.width() || m.sdf.height() != like.height())
    throw ConfigError("mask " + cfg.mask_path + " does not match the frame size");
  return m;
}

std::string csv_number(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

std::string state_rows(std::size_t step, double t, const VortexState& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i)
    out += std::to_string(step) + "," + csv_number(t) + "," + std::to_string(i) + "," +
           csv_number(s.positions[i].x) + "," + csv_number(s.positions[i].y) + "," +
           csv_number(s.strengths[i]) + "," + csv_number(s.sizes[i]) + "\n";
  return out;
}

int cmd_generate(const RunConfig& cfg) {
  const SceneSpec scene = cfg.scene();
  scene.validate();
  const SceneData data = generate(scene);
  const fs::path dir = cfg.frames_dir;
  std::string particles = "frame,time,particle,x,y,strength,size\n";
  for (std::size_t f = 0; f < data.frames.size(); ++f) {
    write_png(dir / numbered_name("frame", f, ".png"), data.frames[f]);
    if (cfg.float_frames) write_float_image(dir / numbered_name("frame", f, ".dvpimg"), data.frames[f]);
    write_velocity(dir / numbered_name("vel", f, ".bin"), data.velocities[f]);
    particles += state_rows(f, static_cast<double>(f) * scene.dt, data.states[f]);
  }
  write_file_atomic(dir / "scene_particles.csv", particles);
  echo_config(dir, "generate", cfg);
  std::cerr << "generate: " << data.frames.size() << " frames at " << scene.resolution << "x"
            << scene.resolution << " -> " << dir.string() << "\n";
  return 0;
}

int cmd_fit(const RunConfig& cfg, bool resume) {
  const auto frames = load_frames(cfg);
  const auto mask = load_mask(cfg, frames.front());
  const std::size_t needed = cfg.train.mode == TrajectoryMode::kFull ? cfg.train.window + 1 : 2;
  if (frames.size() < needed)
    throw ConfigError("fit needs at least " + std::to_string(needed) + " frames, found " +
                      std::to_string(frames.size()));

  const fs::path out = cfg.out_dir;
  std::optional<Checkpoint> previous;
  std::string loss_csv = "iteration,image_loss,alignment_loss,lr_multiplier\n";
  if (resume) {
    previous = load_checkpoint(cfg.checkpoint_path());
    if (fs::exists(out / "loss.csv")) loss_csv = read_file(out / "loss.csv");
  }

  const auto start = std::chrono::steady_clock::now();
  TrainOptions options;
  options.resume = previous ? &*previous : nullptr;
  options.on_iteration = [&](const LossRecord& r) {
    loss_csv += std::to_string(r.iteration) + "," + csv_number(r.image_loss) + "," +
                csv_number(r.alignment_loss) + "," + csv_number(r.lr_multiplier) + "\n";
    if ((r.iteration + 1) % 100 == 0) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::cerr << "fit: iteration " << r.iteration + 1 << "/" << cfg.train.iterations
                << "  image " << r.image_loss << "  alignment " << r.alignment_loss << "  "
                << static_cast<long>(secs) << "s\n";
    }
  };
  const TrainResult result = train(frames, mask ? &*mask : nullptr, cfg.train, options);
  const Checkpoint& ck = result.checkpoint;
  if (!previous && !ck.pretrain.converged)
    std::cerr << "fit: warning: trajectory pretraining residuals (position " << ck.pretrain.position_rms
              << ", velocity " << ck.pretrain.velocity_rms << ") are above 1e-3\n";

  save_checkpoint(cfg.checkpoint_path(), ck, cfg);
  write_file_atomic(out / "loss.csv", loss_csv);
  echo_config(out, "fit", cfg);
  std::cerr << "fit: " << ck.iteration << " iterations, checkpoint " << cfg.checkpoint_path().string()
            << "\n";
  return 0;
}

GridGeometry output_geometry(const RunConfig& cfg) {
  std::size_t w = cfg.scene_resolution, h = cfg.scene_resolution;
  if (cfg.infer_resolution > 0) {
    w = h = cfg.infer_resolution;
  } else if (const auto paths = numbered_files(cfg.frames_dir, "frame", frame_ext(cfg.frame_format));
             !paths.empty()) {
    const GridField f = read_frame(paths.front(), cfg.frame_format);
    w = f.width();
    h = f.height();
  }
  return {w, h, DomainMap::letterboxed(w, h)};
}

int cmd_infer(const RunConfig& cfg) {
  const Checkpoint ck = load_checkpoint(cfg.checkpoint_path());
  const GridGeometry geometry = output_geometry(cfg);
  const fs::path dir = fs::path(cfg.out_dir) / "infer";
  auto emit = [&](double t, const std::string& vel_name, const std::string& png_name) {
    const GridField u = infer_velocity(ck, t, geometry);
    write_velocity(dir / vel_name, u);
    write_png(dir / png_name, color_wheel(u));
  };
  if (cfg.infer_time) {
    emit(*cfg.infer_time, "velocity.bin", "velocity.png");
  } else if (cfg.infer_frame) {
    if (*cfg.infer_frame >= ck.frames)
      throw std::invalid_argument("infer_frame " + std::to_string(*cfg.infer_frame) +
                                  " is outside the " + std::to_string(ck.frames) +
                                  " observed frames");
    emit(static_cast<double>(*cfg.infer_frame) * ck.config.dt,
         numbered_name("vel", *cfg.infer_frame, ".bin"),
         numbered_name("color", *cfg.infer_frame, ".png"));
  } else {
    for (std::size_t f = 0; f < ck.frames; ++f)
      emit(static_cast<double>(f) * ck.config.dt, numbered_name("vel", f, ".bin"),
           numbered_name("color", f, ".png"));
  }
  echo_config(cfg.out_dir, "infer", cfg);
  std::cerr << "infer: " << geometry.width << "x" << geometry.height << " -> " << dir.string() << "\n";
  return 0;
}

int cmd_predict(const RunConfig& cfg) {
  const Checkpoint ck = load_checkpoint(cfg.checkpoint_path());
  const fs::path last_path =
      fs::path(cfg.frames_dir) / numbered_name("frame", ck.frames - 1, frame_ext(cfg.frame_format));
  if (!fs::exists(last_path)) throw ConfigError("last observed frame " + last_path.string() + " not found");
  const GridField last = read_frame(last_path, cfg.frame_format);
  const auto mask = load_mask(cfg, last);
  const RolloutResult r = predict(ck, last, cfg.predict_steps, mask ? &*mask : nullptr);

  const fs::path dir = cfg.pred_dir.empty() ? fs::path(cfg.out_dir) / "predict" : fs::path(cfg.pred_dir);
  std::string particles = "step,time,particle,x,y,strength,size\n";
  for (std::size_t k = 0; k < r.frames.size(); ++k) {
    write_png(dir / numbered_name("pred", k, ".png"), r.frames[k]);
    if (cfg.float_frames) write_float_image(dir / numbered_name("pred", k, ".dvpimg"), r.frames[k]);
    write_velocity(dir / numbered_name("vel", k, ".bin"), r.velocities[k]);
    particles += state_rows(k, ck.t_end() + static_cast<double>(k) * ck.config.dt, r.states[k]);
  }
  write_file_atomic(dir / "particles.csv", particles);
  echo_config(cfg.out_dir, "predict", cfg);
  std::cerr << "predict: " << cfg.predict_steps << " steps -> " << dir.string() << "\n";
  return 0;
}

std::vector<GridField> read_all(const std::vector<fs::path>& paths, std::size_t first,
                                std::size_t count, GridField (*reader)(const fs::path&)) {
  std::vector<GridField> out;
  for (std::size_t k = 0; k < count; ++k) out.push_back(reader(paths[first + k]));
  return out;
}

int cmd_evaluate(const RunConfig& cfg) {
  const fs::path pred_dir = cfg.pred_dir.empty() ? fs::path(cfg.out_dir) / "predict" : fs::path(cfg.pred_dir);
  const fs::path gt_dir = cfg.gt_dir.empty() ? fs::path(cfg.frames_dir) : fs::path(cfg.gt_dir);
  const auto ext = frame_ext(cfg.frame_format);
  auto reader = cfg.frame_format == FrameFormat::kFloat ? &read_float_image : &read_png;

  auto pred_images = numbered_files(pred_dir, "pred", ext);
  if (pred_images.empty()) pred_images = numbered_files(pred_dir, "frame", ext);
  const auto gt_images = numbered_files(gt_dir, "frame", ext);
  const auto pred_vel = numbered_files(pred_dir, "vel", ".bin");
  const auto gt_vel = numbered_files(gt_dir, "vel", ".bin");

  const std::size_t first = cfg.gt_first_frame;
  const bool images = !pred_images.empty() && !gt_images.empty();
  const bool velocities = !pred_vel.empty() && !gt_vel.empty();
  if (!images && !velocities)
    throw ConfigError("nothing to compare between " + pred_dir.string() + " and " + gt_dir.string());
  auto check = [&](const char* what, std::size_t pred, std::size_t gt) {
    if (first + pred > gt)
      throw ConfigError(std::string(what) + " count mismatch: " + std::to_string(pred) +
                        " predicted, " + std::to_string(gt) + " ground truth from frame " +
                        std::to_string(first));
  };
  if (images) check("frame", pred_images.size(), gt_images.size());
  if (velocities) check("velocity", pred_vel.size(), gt_vel.size());
  if (images && velocities && pred_images.size() != pred_vel.size())
    throw ConfigError("prediction has " + std::to_string(pred_images.size()) + " frames but " +
                      std::to_string(pred_vel.size()) + " velocity files");

  std::vector<GridField> pi, gi, pv, gv;
  if (images) {
    pi = read_all(pred_images, 0, pred_images.size(), reader);
    gi = read_all(gt_images, first, pred_images.size(), reader);
  }
  if (velocities) {
    pv = read_all(pred_vel, 0, pred_vel.size(), &read_velocity);
    gv = read_all(gt_vel, first, pred_vel.size(), &read_velocity);
  }
  const GridField& like = images ? gi.front() : gv.front();
  const auto mask = load_mask(cfg, like);
  const MetricsReport report = evaluate_sequence(pi, gi, pv, gv, mask ? &*mask : nullptr, first);

  auto cell = [](const std::optional<double>& v) { return v ? csv_number(*v) : std::string("absent"); };
  std::string csv = "frame,aepe,aae,vorticity_rmse,divergence_rmse,image_rmse,pyramid_proxy\n";
  for (std::size_t k = 0; k < report.frames.size(); ++k) {
    const FrameMetrics& m = report.frames[k];
    csv += std::to_string(report.first_frame + k) + "," + cell(m.aepe) + "," + cell(m.aae) + "," +
           cell(m.vorticity_rmse) + "," + cell(m.divergence_rmse) + "," + cell(m.image_rmse) + "," +
           cell(m.pyramid_proxy) + "\n";
  }
  const FrameMetrics& m = report.mean;
  std::string summary = "# time-averaged over " + std::to_string(report.frames.size()) +
                        " frames starting at ground-truth frame " +
                        std::to_string(report.first_frame) + "\n";
  summary += "aepe = " + cell(m.aepe) + "\n";
  summary += "aae = " + cell(m.aae) + "\n";
  summary += "vorticity_rmse = " + cell(m.vorticity_rmse) + "\n";
  summary += "divergence_rmse = " + cell(m.divergence_rmse) + "\n";
  summary += "image_rmse = " + cell(m.image_rmse) + "\n";
  summary += "# pyramid_proxy is a Gaussian-pyramid RMSE standing in for a perceptual loss\n";
  summary += "pyramid_proxy = " + cell(m.pyramid_proxy) + "\n";
  write_file_atomic(fs::path(cfg.out_dir) / "metrics.csv", csv);
  write_file_atomic(fs::path(cfg.out_dir) / "metrics_summary.txt", summary);
  echo_config(cfg.out_dir, "evaluate", cfg);
  std::cout << summary;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable vortex particles: fit, infer and predict 2D flows from frames"};
  app.require_subcommand(1);

  CommonArgs args;
  bool resume = false;
  auto add = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", args.config_path, "key = value configuration file");
    sub->add_option("--set", args.overrides, "override one key (key=value), repeatable")
        ->take_all();
    return sub;
  };
  CLI::App* gen = add("generate", "render a synthetic scene into frames_dir");
  CLI::App* fit = add("fit", "fit a vortex system to the frames in frames_dir");
  fit->add_flag("--resume", resume, "continue from the checkpoint");
  CLI::App* inf = add("infer", "velocity field at infer_time, infer_frame, or every observed frame");
  CLI::App* pre = add("predict", "roll forward predict_steps frames from the last observed frame");
  CLI::App* eva = add("evaluate", "compare pred_dir against gt_dir");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    const RunConfig cfg = resolve(args);
    if (gen->parsed()) return cmd_generate(cfg);
    if (fit->parsed()) return cmd_fit(cfg, resume);
    if (inf->parsed()) return cmd_infer(cfg);
    if (pre->parsed()) return cmd_predict(cfg);
    if (eva->parsed()) return cmd_evaluate(cfg);
  } catch (const NumericalError& e) {
    std::cerr << "dvp: numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "dvp: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
