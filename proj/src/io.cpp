#include "dvp/io.hpp"

#include <png.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>

namespace dvp {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume little-endian");

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view what) {
  throw ConfigError("config: " + std::string(key) + " = '" + std::string(value) + "': " +
                    std::string(what));
}

double parse_double(std::string_view key, std::string_view value) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size() || !std::isfinite(v))
    bad_value(key, value, "expected a finite number");
  return v;
}

template <class Int>
Int parse_unsigned(std::string_view key, std::string_view value) {
  Int v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size())
    bad_value(key, value, "expected a non-negative integer");
  return v;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "expected true or false");
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <class F>
auto rethrow_as_config(std::string_view key, std::string_view value, F&& parse) {
  try {
    return parse(value);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    bad_value(key, value, e.what());
  }
}

VortexState parse_vortices(std::string_view key, std::string_view value) {
  VortexState s;
  std::size_t pos = 0;
  while (pos <= value.size()) {
    const auto end = std::min(value.find(';', pos), value.size());
    const auto item = trim(value.substr(pos, end - pos));
    pos = end + 1;
    if (item.empty()) continue;
    double f[4];
    std::size_t k = 0, p = 0;
    while (k < 4 && p <= item.size()) {
      const auto e = std::min(item.find(',', p), item.size());
      f[k++] = parse_double(key, trim(item.substr(p, e - p)));
      p = e + 1;
    }
    if (k != 4 || p <= item.size()) bad_value(key, item, "expected x,y,strength,size");
    s.positions.push_back({f[0], f[1]});
    s.strengths.push_back(f[2]);
    s.sizes.push_back(f[3]);
  }
  if (s.size() == 0) bad_value(key, value, "needs at least one vortex");
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    bad_value(key, value, e.what());
  }
  return s;
}

std::string render_vortices(const VortexState& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "; ";
    out += format_double(s.positions[i].x) + "," + format_double(s.positions[i].y) + "," +
           format_double(s.strengths[i]) + "," + format_double(s.sizes[i]);
  }
  return out;
}

// Little-endian byte stream helpers.
class Writer {
 public:
  void bytes(std::string_view s) { out_.append(s); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void f32(float v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void text(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  std::string take() { return std::move(out_); }

 private:
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  std::string out_;
};

class Reader {
 public:
  Reader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

  void magic(std::string_view m) {
    if (data_.substr(0, m.size()) != m) fail("bad magic (expected " + std::string(m) + ")");
    pos_ = m.size();
  }
  std::uint32_t u32() { return pod<std::uint32_t>(); }
  float f32() { return pod<float>(); }
  double f64() { return pod<double>(); }
  std::string text() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) fail("truncated");
  }
  void finish() const {
    if (pos_ != data_.size()) fail("trailing bytes");
  }
  [[noreturn]] void fail(const std::string& msg) const { throw FormatError(what_ + ": " + msg); }

 private:
  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }

  std::string_view data_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::uint32_t checked_u32(std::size_t v) {
  if (v > UINT32_MAX) throw FormatError("dimension does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

void write_grid(const fs::path& path, std::string_view magic, const GridField& f,
                bool with_channels) {
  Writer w;
  w.bytes(magic);
  w.u32(checked_u32(f.width()));
  w.u32(checked_u32(f.height()));
  if (with_channels) w.u32(checked_u32(f.channels()));
  for (double v : f.data()) w.f32(static_cast<float>(v));
  write_file_atomic(path, w.take());
}

GridField read_grid(const fs::path& path, std::string_view magic, std::size_t fixed_channels) {
  const std::string bytes = read_file(path);
  Reader r(bytes, path.string());
  r.magic(magic);
  const std::size_t w = r.u32(), h = r.u32();
  const std::size_t c = fixed_channels ? fixed_channels : r.u32();
  if (w == 0 || h == 0 || c == 0 || c > 4) r.fail("bad dimensions");
  r.need(w * h * c * sizeof(float));
  GridField f(w, h, c, DomainMap::letterboxed(w, h));
  for (double& v : f.data()) v = r.f32();
  r.finish();
  return f;
}

// Metadata block: `key = value` lines.
std::map<std::string, std::string, std::less<>> parse_metadata(std::string_view text) {
  std::map<std::string, std::string, std::less<>> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) continue;
    out[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

SceneSpec RunConfig::scene() const {
  SceneSpec s;
  s.vortices = scene_vortices;
  s.background = scene_background;
  s.resolution = scene_resolution;
  s.dt = train.dt;
  s.frames = scene_frames;
  s.kernel = scene_kernel;
  s.seed = scene_seed;
  return s;
}

fs::path RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? fs::path(out_dir) / "checkpoint.dvp" : fs::path(checkpoint);
}

void apply_setting(RunConfig& c, std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  TrainConfig& t = c.train;
  auto size = [&](std::size_t& dst) { dst = parse_unsigned<std::size_t>(key, value); };
  auto real = [&](double& dst) { dst = parse_double(key, value); };

  if (key == "n_particles") size(t.n_particles);
  else if (key == "window") size(t.window);
  else if (key == "batch") size(t.batch);
  else if (key == "iterations") size(t.iterations);
  else if (key == "pretrain_iterations") size(t.pretrain_iterations);
  else if (key == "lr_n1") real(t.lr_n1);
  else if (key == "lr_n2") real(t.lr_n2);
  else if (key == "lr_omega") real(t.lr_omega);
  else if (key == "lr_delta") real(t.lr_delta);
  else if (key == "alignment_weight") real(t.alignment_weight);
  else if (key == "lr_decay_iteration") size(t.lr_decay_iteration);
  else if (key == "lr_decay_factor") real(t.lr_decay_factor);
  else if (key == "epsilon") real(t.epsilon);
  else if (key == "eta") real(t.eta);
  else if (key == "dt") real(t.dt);
  else if (key == "kernel")
    t.kernel = rethrow_as_config(key, value, parse_kernel_variant);
  else if (key == "seed") t.seed = parse_unsigned<std::uint64_t>(key, value);
  else if (key == "mode")
    t.mode = rethrow_as_config(key, value, parse_trajectory_mode);
  else if (key == "initial_only_window") size(t.initial_only_window);
  else if (key == "alignment")
    t.alignment = rethrow_as_config(key, value, parse_alignment_mode);
  else if (key == "kernel_lut_knots") size(t.kernel_lut_knots);
  else if (key == "frames_dir") c.frames_dir = value;
  else if (key == "mask_path") c.mask_path = value;
  else if (key == "out_dir") c.out_dir = value;
  else if (key == "checkpoint") c.checkpoint = value;
  else if (key == "frame_format") {
    if (value == "png") c.frame_format = FrameFormat::kPng;
    else if (value == "float") c.frame_format = FrameFormat::kFloat;
    else bad_value(key, value, "expected png or float");
  } else if (key == "scene_vortices") c.scene_vortices = parse_vortices(key, value);
  else if (key == "scene_background")
    c.scene_background = rethrow_as_config(key, value, parse_background);
  else if (key == "scene_resolution") size(c.scene_resolution);
  else if (key == "scene_frames") size(c.scene_frames);
  else if (key == "scene_kernel")
    c.scene_kernel = rethrow_as_config(key, value, parse_kernel_variant);
  else if (key == "scene_seed") c.scene_seed = parse_unsigned<std::uint64_t>(key, value);
  else if (key == "float_frames") c.float_frames = parse_bool(key, value);
  else if (key == "infer_time") {
    if (value.empty()) c.infer_time.reset();
    else c.infer_time = parse_double(key, value);
  } else if (key == "infer_frame") {
    if (value.empty()) c.infer_frame.reset();
    else c.infer_frame = parse_unsigned<std::size_t>(key, value);
  } else if (key == "infer_resolution") size(c.infer_resolution);
  else if (key == "observed_frames") size(c.observed_frames);
  else if (key == "predict_steps") size(c.predict_steps);
  else if (key == "pred_dir") c.pred_dir = value;
  else if (key == "gt_dir") c.gt_dir = value;
  else if (key == "gt_first_frame") size(c.gt_first_frame);
  else throw ConfigError("config: unknown key '" + std::string(key) + "'");
}

RunConfig parse_config(std::string_view text, RunConfig base) {
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    apply_setting(base, line.substr(0, eq), line.substr(eq + 1));
  }
  return base;
}

RunConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text);
}

std::string render_config(const RunConfig& c) {
  const TrainConfig& t = c.train;
  std::ostringstream os;
  auto kv = [&](std::string_view k, const std::string& v) { os << k << " = " << v << '\n'; };
  auto num = [&](std::string_view k, double v) { kv(k, format_double(v)); };
  auto cnt = [&](std::string_view k, std::uint64_t v) { kv(k, std::to_string(v)); };

  cnt("n_particles", t.n_particles);
  cnt("window", t.window);
  cnt("batch", t.batch);
  cnt("iterations", t.iterations);
  cnt("pretrain_iterations", t.pretrain_iterations);
  num("lr_n1", t.lr_n1);
  num("lr_n2", t.lr_n2);
  num("lr_omega", t.lr_omega);
  num("lr_delta", t.lr_delta);
  num("alignment_weight", t.alignment_weight);
  cnt("lr_decay_iteration", t.lr_decay_iteration);
  num("lr_decay_factor", t.lr_decay_factor);
  num("epsilon", t.epsilon);
  num("eta", t.eta);
  num("dt", t.dt);
  kv("kernel", to_string(t.kernel));
  cnt("seed", t.seed);
  kv("mode", to_string(t.mode));
  cnt("initial_only_window", t.initial_only_window);
  kv("alignment", to_string(t.alignment));
  cnt("kernel_lut_knots", t.kernel_lut_knots);
  kv("frames_dir", c.frames_dir);
  kv("mask_path", c.mask_path);
  kv("out_dir", c.out_dir);
  kv("checkpoint", c.checkpoint);
  kv("frame_format", c.frame_format == FrameFormat::kFloat ? "float" : "png");
  kv("scene_vortices", render_vortices(c.scene_vortices));
  kv("scene_background", to_string(c.scene_background));
  cnt("scene_resolution", c.scene_resolution);
  cnt("scene_frames", c.scene_frames);
  kv("scene_kernel", to_string(c.scene_kernel));
  cnt("scene_seed", c.scene_seed);
  kv("float_frames", c.float_frames ? "true" : "false");
  kv("infer_time", c.infer_time ? format_double(*c.infer_time) : "");
  kv("infer_frame", c.infer_frame ? std::to_string(*c.infer_frame) : "");
  cnt("infer_resolution", c.infer_resolution);
  cnt("observed_frames", c.observed_frames);
  cnt("predict_steps", c.predict_steps);
  kv("pred_dir", c.pred_dir);
  kv("gt_dir", c.gt_dir);
  cnt("gt_first_frame", c.gt_first_frame);
  return os.str();
}

// ---------------------------------------------------------------------------
// Files

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw std::runtime_error("write failed: " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_velocity(const fs::path& path, const GridField& vel) {
  if (vel.channels() != 2) throw std::invalid_argument("write_velocity: field must have 2 channels");
  write_grid(path, "DVPVEL01", vel, false);
}

GridField read_velocity(const fs::path& path) { return read_grid(path, "DVPVEL01", 2); }

void write_float_image(const fs::path& path, const GridField& image) {
  write_grid(path, "DVPIMG01", image, true);
}

GridField read_float_image(const fs::path& path) { return read_grid(path, "DVPIMG01", 0); }

void write_png(const fs::path& path, const GridField& rgb) {
  if (rgb.channels() != 3) throw std::invalid_argument("write_png: image must have 3 channels");
  std::vector<std::uint8_t> pixels(rgb.data().size());
  std::transform(rgb.data().begin(), rgb.data().end(), pixels.begin(), [](double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  });
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = checked_u32(rgb.width());
  img.height = checked_u32(rgb.height());
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, pixels.data(), 0, nullptr))
    throw std::runtime_error("png encode failed: " + std::string(img.message));
  std::string buffer(size, '\0');
  if (!png_image_write_to_memory(&img, buffer.data(), &size, 0, pixels.data(), 0, nullptr))
    throw std::runtime_error("png encode failed: " + std::string(img.message));
  buffer.resize(size);
  write_file_atomic(path, buffer);
}

GridField read_png(const fs::path& path) {
  const std::string bytes = read_file(path);
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw FormatError(path.string() + ": " + img.message);
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw FormatError(path.string() + ": " + img.message);
  }
  GridField f(img.width, img.height, 3, DomainMap::letterboxed(img.width, img.height));
  for (std::size_t k = 0; k < pixels.size(); ++k) f.data()[k] = pixels[k] / 255.0;
  return f;
}

MaskField read_mask(const fs::path& path) {
  const GridField rgb = read_png(path);
  std::vector<bool> fluid(rgb.cell_count());
  for (std::size_t k = 0; k < fluid.size(); ++k) {
    const auto px = rgb.data().subspan(3 * k, 3);
    const double luma = 255.0 * (0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]);
    fluid[k] = luma < 128.0;
  }
  return mask_from_fluid(fluid, rgb.width(), rgb.height());
}

MaskField mask_from_fluid(const std::vector<bool>& fluid, std::size_t w, std::size_t h) {
  if (fluid.size() != w * h || w == 0 || h == 0)
    throw std::invalid_argument("mask_from_fluid: size mismatch");
  const DomainMap domain = DomainMap::letterboxed(w, h);
  const double far = static_cast<double>(w + h);

  // Chamfer distance (in cells) from every cell to the nearest cell whose
  // fluid flag equals `target`.
  auto chamfer = [&](bool target) {
    std::vector<double> d(w * h);
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = fluid[k] == target ? 0.0 : far;
    const double diag = std::numbers::sqrt2;
    auto relax = [&](std::size_t k, std::ptrdiff_t i, std::ptrdiff_t j, double cost) {
      if (i < 0 || j < 0 || i >= static_cast<std::ptrdiff_t>(w) || j >= static_cast<std::ptrdiff_t>(h))
        return;
      d[k] = std::min(d[k], d[static_cast<std::size_t>(j) * w + static_cast<std::size_t>(i)] + cost);
    };
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(h); ++j)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(w); ++i) {
        const std::size_t k = static_cast<std::size_t>(j) * w + static_cast<std::size_t>(i);
        relax(k, i - 1, j, 1.0);
        relax(k, i, j - 1, 1.0);
        relax(k, i - 1, j - 1, diag);
        relax(k, i + 1, j - 1, diag);
      }
    for (std::ptrdiff_t j = static_cast<std::ptrdiff_t>(h) - 1; j >= 0; --j)
      for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(w) - 1; i >= 0; --i) {
        const std::size_t k = static_cast<std::size_t>(j) * w + static_cast<std::size_t>(i);
        relax(k, i + 1, j, 1.0);
        relax(k, i, j + 1, 1.0);
        relax(k, i + 1, j + 1, diag);
        relax(k, i - 1, j + 1, diag);
      }
    return d;
  };
  const auto to_solid = chamfer(false);
  const auto to_fluid = chamfer(true);
  MaskField m{GridField(w, h, 1, domain)};
  const double cell = domain.spacing.x;
  for (std::size_t k = 0; k < w * h; ++k)
    m.sdf.data()[k] = fluid[k] ? -(to_solid[k] - 0.5) * cell : (to_fluid[k] - 0.5) * cell;
  return m;
}

GridField color_wheel(const GridField& vel) {
  if (vel.channels() != 2) throw std::invalid_argument("color_wheel: field must have 2 channels");
  const std::size_t n = vel.cell_count();
  std::vector<double> mag(n);
  for (std::size_t k = 0; k < n; ++k) mag[k] = std::hypot(vel.data()[2 * k], vel.data()[2 * k + 1]);
  std::vector<double> sorted = mag;
  const std::size_t q = std::min(n - 1, static_cast<std::size_t>(0.99 * static_cast<double>(n)));
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(q), sorted.end());
  const double scale = sorted[q];

  GridField out(vel.width(), vel.height(), 3, vel.domain());
  for (std::size_t k = 0; k < n; ++k) {
    const double m = scale > 0.0 ? std::min(1.0, mag[k] / scale) : 0.0;
    const double angle = std::atan2(vel.data()[2 * k + 1], vel.data()[2 * k]);
    const double hue = (angle + std::numbers::pi) / (2.0 * std::numbers::pi) * 6.0;
    const double value = 0.5 + 0.5 * m;
    const double chroma = value * m;
    const double x = chroma * (1.0 - std::abs(std::fmod(hue, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hue) % 6) {
      case 0: r = chroma, g = x; break;
      case 1: r = x, g = chroma; break;
      case 2: g = chroma, b = x; break;
      case 3: g = x, b = chroma; break;
      case 4: r = x, b = chroma; break;
      default: r = chroma, b = x; break;
    }
    const double base = value - chroma;
    out.at(k % vel.width(), k / vel.width(), 0) = r + base;
    out.at(k % vel.width(), k / vel.width(), 1) = g + base;
    out.at(k % vel.width(), k / vel.width(), 2) = b + base;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

std::vector<ad::Tensor*> model_tensors(TrajectoryModel& traj, KernelModel& kernel) {
  std::vector<ad::Tensor*> out;
  for (auto& t : traj.n1.params()) out.push_back(&t);
  out.push_back(&traj.omega_logits);
  out.push_back(&traj.delta_logits);
  if (kernel.is_neural())
    for (auto& t : kernel.n2.params()) out.push_back(&t);
  return out;
}

void write_entry(Writer& w, const std::string& name, ad::Shape shape, std::span<const double> v) {
  w.text(name);
  w.u32(2);
  w.u32(checked_u32(shape.rows));
  w.u32(checked_u32(shape.cols));
  for (double x : v) w.f64(x);
}

std::string moment_name(const ParamGroup& g, char which, const ad::Tensor& t) {
  return "adam." + g.name + "." + which + "." + t.name;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ck, const RunConfig& config) {
  Checkpoint copy = ck;
  Writer w;
  w.bytes("DVPCKPT1");
  const auto tensors = model_tensors(copy.trajectory, copy.kernel);
  std::size_t moments = 0;
  for (const auto& g : ck.optimizer)
    moments += g.first_moment.size() + g.second_moment.size();
  w.u32(checked_u32(tensors.size() + moments));
  for (const ad::Tensor* t : tensors) write_entry(w, t->name, t->shape, t->data);
  for (const auto& g : ck.optimizer)
    for (std::size_t k = 0; k < g.params.size(); ++k) {
      write_entry(w, moment_name(g, 'm', g.params[k]), g.params[k].shape, g.first_moment.at(k));
      write_entry(w, moment_name(g, 'v', g.params[k]), g.params[k].shape, g.second_moment.at(k));
    }

  RunConfig embedded = config;
  embedded.train = ck.config;
  w.text(render_config(embedded));

  std::ostringstream meta;
  meta << std::setprecision(17);
  meta << "iteration = " << ck.iteration << '\n'
       << "frames = " << ck.frames << '\n'
       << "final_image_loss = " << format_double(ck.final_image_loss) << '\n'
       << "final_alignment_loss = " << format_double(ck.final_alignment_loss) << '\n'
       << "pretrain_position_rms = " << format_double(ck.pretrain.position_rms) << '\n'
       << "pretrain_velocity_rms = " << format_double(ck.pretrain.velocity_rms) << '\n'
       << "pretrain_converged = " << (ck.pretrain.converged ? "true" : "false") << '\n'
       << "rng_state = " << ck.rng_state << '\n';
  for (const auto& g : ck.optimizer) meta << "adam_step." << g.name << " = " << g.step << '\n';
  w.text(meta.str());
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes, RunConfig* config_out) {
  Reader r(bytes, "checkpoint");
  r.magic("DVPCKPT1");
  const std::uint32_t count = r.u32();
  struct Entry {
    ad::Shape shape;
    std::vector<double> values;
  };
  std::map<std::string, Entry, std::less<>> entries;
  for (std::uint32_t e = 0; e < count; ++e) {
    std::string name = r.text();
    const std::uint32_t rank = r.u32();
    if (rank != 2) r.fail("entry '" + name + "' has rank " + std::to_string(rank));
    Entry entry;
    entry.shape.rows = r.u32();
    entry.shape.cols = r.u32();
    r.need(entry.shape.size() * sizeof(double));
    entry.values.resize(entry.shape.size());
    for (double& v : entry.values) v = r.f64();
    if (!entries.emplace(std::move(name), std::move(entry)).second) r.fail("duplicate entry");
  }
  const std::string config_text = r.text();
  const std::string meta_text = r.text();
  r.finish();

  RunConfig run;
  try {
    run = parse_config(config_text);
    run.train.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(std::string("embedded configuration: ") + e.what());
  }
  const auto meta = parse_metadata(meta_text);
  auto field = [&](std::string_view key) -> const std::string& {
    const auto it = meta.find(key);
    if (it == meta.end()) r.fail("metadata missing '" + std::string(key) + "'");
    return it->second;
  };
  auto number = [&](std::string_view key) {
    try {
      return parse_double(key, field(key));
    } catch (const ConfigError& e) {
      r.fail(e.what());
    }
  };
  auto count_of = [&](std::string_view key) {
    try {
      return parse_unsigned<std::size_t>(key, field(key));
    } catch (const ConfigError& e) {
      r.fail(e.what());
    }
  };

  Checkpoint ck;
  ck.config = run.train;
  ck.iteration = count_of("iteration");
  ck.frames = count_of("frames");
  if (ck.frames < 2) r.fail("frame count must be at least 2");
  ck.final_image_loss = number("final_image_loss");
  ck.final_alignment_loss = number("final_alignment_loss");
  ck.pretrain.position_rms = number("pretrain_position_rms");
  ck.pretrain.velocity_rms = number("pretrain_velocity_rms");
  ck.pretrain.converged = field("pretrain_converged") == "true";
  ck.rng_state = field("rng_state");

  // Rebuild the architecture, then overwrite every tensor from the file.
  std::mt19937_64 scratch(0);
  ck.trajectory = TrajectoryModel::create(ck.config.n_particles, ck.t_end(), scratch,
                                          ck.config.epsilon);
  ck.kernel = make_kernel(ck.config, scratch);
  auto take = [&](const std::string& name, ad::Shape shape) -> std::vector<double>& {
    const auto it = entries.find(name);
    if (it == entries.end()) r.fail("missing entry '" + name + "'");
    if (!(it->second.shape == shape))
      r.fail("entry '" + name + "' has shape " + to_string(it->second.shape) + ", expected " +
             to_string(shape));
    return it->second.values;
  };
  std::size_t used = 0;
  for (ad::Tensor* t : model_tensors(ck.trajectory, ck.kernel)) {
    t->data = take(t->name, t->shape);
    ++used;
  }
  ck.optimizer = optimizer_groups(ck.trajectory, ck.kernel, ck.config);
  for (auto& g : ck.optimizer) {
    for (std::size_t k = 0; k < g.params.size(); ++k) {
      g.first_moment[k] = take(moment_name(g, 'm', g.params[k]), g.params[k].shape);
      g.second_moment[k] = take(moment_name(g, 'v', g.params[k]), g.params[k].shape);
      used += 2;
    }
    g.step = static_cast<std::int64_t>(count_of("adam_step." + g.name));
  }
  if (used != entries.size()) r.fail("unexpected extra entries");
  if (config_out) *config_out = run;
  return ck;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ck, const RunConfig& config) {
  write_file_atomic(path, encode_checkpoint(ck, config));
}

Checkpoint load_checkpoint(const fs::path& path, RunConfig* config) {
  return decode_checkpoint(read_file(path), config);
}

std::string numbered_name(std::string_view prefix, std::size_t index, std::string_view ext) {
  std::ostringstream os;
  os << prefix << '_' << std::setw(4) << std::setfill('0') << index << ext;
  return os.str();
}

std::vector<fs::path> numbered_files(const fs::path& dir, std::string_view prefix,
                                     std::string_view ext) {
  std::vector<fs::path> out;
  for (std::size_t i = 0;; ++i) {
    fs::path p = dir / numbered_name(prefix, i, ext);
    if (!fs::exists(p)) break;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace dvp
