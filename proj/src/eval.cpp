#include "dvp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dvp {

namespace {

void require_match(const GridField& a, const GridField& b, const MaskField* mask,
                   const char* what) {
  if (!a.same_shape(b))
    throw FieldError(std::string(what) + ": shape mismatch (" + std::to_string(a.width()) + "x" +
                     std::to_string(a.height()) + "x" + std::to_string(a.channels()) + " vs " +
                     std::to_string(b.width()) + "x" + std::to_string(b.height()) + "x" +
                     std::to_string(b.channels()) + ")");
  if (mask && (mask->sdf.width() != a.width() || mask->sdf.height() != a.height()))
    throw FieldError(std::string(what) + ": mask resolution mismatch");
}

void require_velocity(const GridField& f, const char* what) {
  if (f.channels() != 2) throw FieldError(std::string(what) + ": expected 2-channel velocity");
}

bool included(const MaskField* mask, std::size_t cell) { return !mask || mask->is_fluid(cell); }

GridField blur_decimate(const GridField& f) {
  static constexpr double kTaps[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  const std::size_t w = f.width(), h = f.height(), c = f.channels();
  auto clampi = [](long v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<long>(v, 0, static_cast<long>(n) - 1));
  };
  std::vector<double> tmp(w * h * c, 0.0);
  for (std::size_t j = 0; j < h; ++j)
    for (std::size_t i = 0; i < w; ++i)
      for (int t = -2; t <= 2; ++t) {
        const std::size_t ii = clampi(static_cast<long>(i) + t, w);
        for (std::size_t q = 0; q < c; ++q) tmp[(j * w + i) * c + q] += kTaps[t + 2] * f.at(ii, j, q);
      }
  const std::size_t w2 = std::max<std::size_t>(2, w / 2), h2 = std::max<std::size_t>(2, h / 2);
  GridField out(w2, h2, c,
                DomainMap{f.domain().origin + 0.5 * f.domain().spacing,
                          Vec2{f.domain().spacing.x * 2.0, f.domain().spacing.y * 2.0}});
  for (std::size_t j = 0; j < h2; ++j)
    for (std::size_t i = 0; i < w2; ++i) {
      const std::size_t si = std::min(2 * i, w - 1), sj = std::min(2 * j, h - 1);
      for (int t = -2; t <= 2; ++t) {
        const std::size_t jj = clampi(static_cast<long>(sj) + t, h);
        for (std::size_t q = 0; q < c; ++q) out.at(i, j, q) += kTaps[t + 2] * tmp[(jj * w + si) * c + q];
      }
    }
  return out;
}

GridField masked_copy(const GridField& f, const MaskField* mask) {
  GridField out = f;
  if (!mask) return out;
  const std::size_t c = f.channels();
  for (std::size_t k = 0; k < f.cell_count(); ++k)
    if (!mask->is_fluid(k))
      for (std::size_t q = 0; q < c; ++q) out.data()[k * c + q] = 0.0;
  return out;
}

void accumulate(std::optional<double>& sum, const std::optional<double>& v) {
  if (v) sum = sum.value_or(0.0) + *v;
}

void divide(std::optional<double>& v, double n) {
  if (v) *v /= n;
}

}  // namespace

double aepe(const GridField& pred, const GridField& gt, const MaskField* mask) {
  require_match(pred, gt, mask, "aepe");
  require_velocity(pred, "aepe");
  double sum = 0.0;
  std::size_t count = 0;
  const auto p = pred.data(), g = gt.data();
  for (std::size_t k = 0; k < pred.cell_count(); ++k) {
    if (!included(mask, k)) continue;
    sum += std::hypot(p[2 * k] - g[2 * k], p[2 * k + 1] - g[2 * k + 1]);
    ++count;
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

double aae(const GridField& pred, const GridField& gt, const MaskField* mask) {
  require_match(pred, gt, mask, "aae");
  require_velocity(pred, "aae");
  double sum = 0.0;
  std::size_t count = 0;
  const auto p = pred.data(), g = gt.data();
  for (std::size_t k = 0; k < pred.cell_count(); ++k) {
    if (!included(mask, k)) continue;
    const double ax = p[2 * k], ay = p[2 * k + 1], bx = g[2 * k], by = g[2 * k + 1];
    if (std::hypot(ax, ay) < 1e-8 || std::hypot(bx, by) < 1e-8) continue;
    sum += std::atan2(std::abs(ax * by - ay * bx), ax * bx + ay * by);
    ++count;
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

double field_rmse(const GridField& a, const GridField& b, const MaskField* mask) {
  require_match(a, b, mask, "field_rmse");
  const std::size_t c = a.channels();
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < a.cell_count(); ++k) {
    if (!included(mask, k)) continue;
    for (std::size_t q = 0; q < c; ++q) {
      const double d = a.data()[k * c + q] - b.data()[k * c + q];
      sum += d * d;
    }
    count += c;
  }
  return count ? std::sqrt(sum / static_cast<double>(count)) : 0.0;
}

double pyramid_rmse(const GridField& a, const GridField& b, const MaskField* mask,
                    std::size_t levels) {
  require_match(a, b, mask, "pyramid_rmse");
  if (levels == 0) throw std::invalid_argument("pyramid_rmse: need at least one level");
  GridField x = masked_copy(a, mask), y = masked_copy(b, mask);
  double total = field_rmse(x, y);
  for (std::size_t l = 1; l < levels; ++l) {
    x = blur_decimate(x);
    y = blur_decimate(y);
    total += field_rmse(x, y);
  }
  return total / static_cast<double>(levels);
}

MetricsReport evaluate_sequence(std::span<const GridField> pred_images,
                                std::span<const GridField> gt_images,
                                std::span<const GridField> pred_velocities,
                                std::span<const GridField> gt_velocities, const MaskField* mask,
                                std::size_t first_frame) {
  if (pred_images.size() != gt_images.size())
    throw std::invalid_argument("evaluate_sequence: " + std::to_string(pred_images.size()) +
                                " predicted frames vs " + std::to_string(gt_images.size()) +
                                " reference frames");
  if (pred_velocities.size() != gt_velocities.size())
    throw std::invalid_argument("evaluate_sequence: velocity list lengths differ");
  const bool images = !pred_images.empty();
  const bool velocities = !pred_velocities.empty();
  if (images && velocities && pred_images.size() != pred_velocities.size())
    throw std::invalid_argument("evaluate_sequence: image and velocity lists differ in length");

  MetricsReport report;
  report.first_frame = first_frame;
  const std::size_t n = images ? pred_images.size() : pred_velocities.size();
  report.frames.resize(n);
  for (std::size_t f = 0; f < n; ++f) {
    FrameMetrics& m = report.frames[f];
    if (velocities) {
      const GridField& p = pred_velocities[f];
      const GridField& g = gt_velocities[f];
      m.aepe = aepe(p, g, mask);
      m.aae = aae(p, g, mask);
      m.vorticity_rmse = field_rmse(vorticity_field(p), vorticity_field(g), mask);
      m.divergence_rmse = field_rmse(divergence_field(p), divergence_field(g), mask);
    }
    if (images) {
      m.image_rmse = field_rmse(pred_images[f], gt_images[f], mask);
      m.pyramid_proxy = pyramid_rmse(pred_images[f], gt_images[f], mask);
    }
  }
  for (const FrameMetrics& m : report.frames) {
    accumulate(report.mean.aepe, m.aepe);
    accumulate(report.mean.aae, m.aae);
    accumulate(report.mean.vorticity_rmse, m.vorticity_rmse);
    accumulate(report.mean.divergence_rmse, m.divergence_rmse);
    accumulate(report.mean.image_rmse, m.image_rmse);
    accumulate(report.mean.pyramid_proxy, m.pyramid_proxy);
  }
  const double count = static_cast<double>(n);
  divide(report.mean.aepe, count);
  divide(report.mean.aae, count);
  divide(report.mean.vorticity_rmse, count);
  divide(report.mean.divergence_rmse, count);
  divide(report.mean.image_rmse, count);
  divide(report.mean.pyramid_proxy, count);
  return report;
}

}  // namespace dvp
