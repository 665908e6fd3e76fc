#pragma once

/// \file
/// Run configuration files, binary field files, PNG frames and checkpoints.
///
/// Binary formats are little-endian:
///   velocity    "DVPVEL01" u32 width, u32 height, float32 (u, v) per cell
///   float image "DVPIMG01" u32 width, u32 height, u32 channels, float32 values
///   checkpoint  "DVPCKPT1" u32 entry count, entries of
///               (u32 name length, name, u32 rank, u32 dims..., float64 values),
///               u32 length + run configuration text, u32 length + metadata text

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dvp/field.hpp"
#include "dvp/integrators.hpp"
#include "dvp/synth.hpp"
#include "dvp/training.hpp"

namespace dvp {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FrameFormat { kPng, kFloat };

/// Everything a command can be told through `key = value` lines.
struct RunConfig {
  TrainConfig train;

  std::string frames_dir = "frames";
  std::string mask_path;  // empty: whole domain is fluid
  std::string out_dir = "out";
  std::string checkpoint;  // empty: <out_dir>/checkpoint.dvp
  FrameFormat frame_format = FrameFormat::kPng;

  // Scene generation; the frame interval is train.dt.
  VortexState scene_vortices = SceneSpec::acceptance().vortices;
  Background scene_background = Background::kSmoothGradient;
  std::size_t scene_resolution = 64;
  std::size_t scene_frames = 90;
  KernelVariant scene_kernel = KernelVariant::kAnalyticOrder1;
  std::uint64_t scene_seed = 0;
  /// Also write unquantized frames next to the PNGs.
  bool float_frames = false;

  std::optional<double> infer_time;
  std::optional<std::size_t> infer_frame;
  std::size_t infer_resolution = 0;  // 0: resolution of the training frames

  /// Frames used for fitting, counted from frame 0; 0 uses every frame found.
  std::size_t observed_frames = 0;

  std::size_t predict_steps = 60;

  std::string pred_dir;
  std::string gt_dir;
  /// Ground-truth frame matched with prediction frame 0.
  std::size_t gt_first_frame = 0;

  SceneSpec scene() const;
  std::filesystem::path checkpoint_path() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Applies one `key = value` assignment. Throws ConfigError on unknown keys
/// or malformed values.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

/// Parses `key = value` lines; '#' starts a comment.
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path);
std::string render_config(const RunConfig& config);

/// Writes `bytes` to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

void write_velocity(const std::filesystem::path& path, const GridField& vel);
/// Letterboxed unit-square domain.
GridField read_velocity(const std::filesystem::path& path);

void write_float_image(const std::filesystem::path& path, const GridField& image);
GridField read_float_image(const std::filesystem::path& path);

/// 8-bit RGB, values clamped to [0, 1] and rounded.
void write_png(const std::filesystem::path& path, const GridField& rgb);
/// Any PNG, converted to RGB in [0, 1].
GridField read_png(const std::filesystem::path& path);

/// Fluid where luminance < 128; returns a signed distance field in domain
/// units (negative inside the fluid).
MaskField read_mask(const std::filesystem::path& path);
MaskField mask_from_fluid(const std::vector<bool>& fluid, std::size_t width, std::size_t height);

/// Hue from the flow angle, saturation and value from the magnitude scaled by
/// its 99th percentile. A zero field renders mid gray.
GridField color_wheel(const GridField& vel);

std::string encode_checkpoint(const Checkpoint& checkpoint, const RunConfig& config);
/// The run configuration embedded in the file is returned through `config`.
Checkpoint decode_checkpoint(std::string_view bytes, RunConfig* config = nullptr);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint,
                     const RunConfig& config);
Checkpoint load_checkpoint(const std::filesystem::path& path, RunConfig* config = nullptr);

/// Numbered frame files `<prefix>_NNNN<ext>` in index order, starting at 0.
std::vector<std::filesystem::path> numbered_files(const std::filesystem::path& dir,
                                                  std::string_view prefix, std::string_view ext);
std::string numbered_name(std::string_view prefix, std::size_t index, std::string_view ext);

}  // namespace dvp
