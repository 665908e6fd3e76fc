#pragma once

/// \file
/// Rectangular sampled fields over a physical domain.
///
/// A GridField stores `width x height` cell-centered samples with 1, 2 or 3
/// interleaved channels. Cell (i, j) lives at
/// `origin + (i * spacing.x, j * spacing.y)` in physical units; row j is the
/// j-th image row. Sampling outside the cell-center bounding box clamps to
/// the nearest edge value.

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace dvp {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

/// Physical origin of cell (0,0) and center-to-center spacing per axis.
struct DomainMap {
  Vec2 origin{0.5, 0.5};
  Vec2 spacing{1.0, 1.0};

  Vec2 cell_center(std::size_t i, std::size_t j) const {
    return {origin.x + static_cast<double>(i) * spacing.x,
            origin.y + static_cast<double>(j) * spacing.y};
  }

  /// Square cells covering the unit square along the longer image axis.
  static DomainMap letterboxed(std::size_t width, std::size_t height);

  /// `width x height` cells tiling the rectangle [x0,x1] x [y0,y1].
  static DomainMap covering(std::size_t width, std::size_t height, Vec2 lo, Vec2 hi);

  friend bool operator==(const DomainMap&, const DomainMap&) = default;
};

class FieldError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bilinear stencil of a point: lower-left cell index and fractional weights.
struct BilinearStencil {
  std::size_t i0 = 0;
  std::size_t j0 = 0;
  double tx = 0.0;
  double ty = 0.0;
  /// Zero when the coordinate was clamped (derivative of the clamp).
  double dtx_dx = 0.0;
  double dty_dy = 0.0;
};

/// Resolution plus domain mapping: everything about a field but its values.
struct GridGeometry {
  std::size_t width = 0;
  std::size_t height = 0;
  DomainMap domain;

  std::size_t cell_count() const { return width * height; }
  Vec2 cell_center(std::size_t i, std::size_t j) const { return domain.cell_center(i, j); }
  std::vector<Vec2> cell_centers() const;
  BilinearStencil stencil(Vec2 p) const;

  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

class GridField {
 public:
  GridField() = default;
  GridField(std::size_t width, std::size_t height, std::size_t channels,
            DomainMap domain);
  GridField(std::size_t width, std::size_t height, std::size_t channels,
            DomainMap domain, std::vector<double> data);

  /// Unit-square letterboxed field filled with zeros.
  static GridField zeros(std::size_t width, std::size_t height, std::size_t channels);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t channels() const { return channels_; }
  std::size_t cell_count() const { return width_ * height_; }
  const DomainMap& domain() const { return domain_; }
  GridGeometry geometry() const { return {width_, height_, domain_}; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  std::vector<double>& storage() { return data_; }

  double& at(std::size_t i, std::size_t j, std::size_t c = 0) {
    return data_[(j * width_ + i) * channels_ + c];
  }
  double at(std::size_t i, std::size_t j, std::size_t c = 0) const {
    return data_[(j * width_ + i) * channels_ + c];
  }

  Vec2 cell_center(std::size_t i, std::size_t j) const { return domain_.cell_center(i, j); }

  /// Cell-center positions in row-major order.
  std::vector<Vec2> cell_centers() const { return geometry().cell_centers(); }

  BilinearStencil stencil(Vec2 p) const { return geometry().stencil(p); }

  bool same_shape(const GridField& other) const {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }

  friend bool operator==(const GridField&, const GridField&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::size_t channels_ = 0;
  DomainMap domain_;
  std::vector<double> data_;
};

/// Bilinear interpolation with edge clamping. Writes `channels` values to out.
void sample_bilinear(const GridField& field, Vec2 p, std::span<double> out);
std::vector<double> sample_bilinear(const GridField& field, Vec2 p);

/// Curl dv/dx - du/dy of a 2-channel field. Central differences inside,
/// second-order one-sided differences on the boundary rows/columns.
GridField vorticity_field(const GridField& vel);

/// Divergence du/dx + dv/dy, same stencils as vorticity_field.
GridField divergence_field(const GridField& vel);

/// Row-major cell centers of a w x h tiling of [lo, hi].
std::vector<Vec2> grid_centers(std::size_t w, std::size_t h, Vec2 lo = {0.0, 0.0},
                               Vec2 hi = {1.0, 1.0});

}  // namespace dvp
