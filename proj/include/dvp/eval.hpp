#pragma once

/// \file
/// Velocity and image error metrics. Masked variants only look at fluid cells.

#include <optional>
#include <span>
#include <vector>

#include "dvp/field.hpp"
#include "dvp/integrators.hpp"

namespace dvp {

/// Mean end-point error |u_pred - u_gt| over included cells.
double aepe(const GridField& pred, const GridField& gt, const MaskField* mask = nullptr);

/// Mean planar angle atan2(|a x b|, a . b); cells where either vector is
/// shorter than 1e-8 are skipped. 0 when nothing is included.
double aae(const GridField& pred, const GridField& gt, const MaskField* mask = nullptr);

/// Root mean square of the difference over included cells and all channels.
double field_rmse(const GridField& a, const GridField& b, const MaskField* mask = nullptr);

/// Perceptual proxy: mean RMSE over a 3-level Gaussian pyramid (5-tap binomial
/// blur, 2x decimation). Cells outside the mask are zeroed in both inputs first.
double pyramid_rmse(const GridField& a, const GridField& b, const MaskField* mask = nullptr,
                    std::size_t levels = 3);

struct FrameMetrics {
  std::optional<double> aepe;
  std::optional<double> aae;
  std::optional<double> vorticity_rmse;
  std::optional<double> divergence_rmse;
  std::optional<double> image_rmse;
  std::optional<double> pyramid_proxy;
};

struct MetricsReport {
  std::size_t first_frame = 0;
  std::vector<FrameMetrics> frames;
  /// Mean of each per-frame column that is present.
  FrameMetrics mean;
};

/// Either pair of lists may be empty (those columns are then absent); lists
/// that are given must have equal lengths.
MetricsReport evaluate_sequence(std::span<const GridField> pred_images,
                                std::span<const GridField> gt_images,
                                std::span<const GridField> pred_velocities,
                                std::span<const GridField> gt_velocities,
                                const MaskField* mask = nullptr, std::size_t first_frame = 0);

}  // namespace dvp
