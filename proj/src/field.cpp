#include "dvp/field.hpp"

#include <algorithm>
#include <cmath>

namespace dvp {

DomainMap DomainMap::letterboxed(std::size_t width, std::size_t height) {
  const double h = 1.0 / static_cast<double>(std::max(width, height));
  return DomainMap{{0.5 * h, 0.5 * h}, {h, h}};
}

DomainMap DomainMap::covering(std::size_t width, std::size_t height, Vec2 lo, Vec2 hi) {
  const double hx = (hi.x - lo.x) / static_cast<double>(width);
  const double hy = (hi.y - lo.y) / static_cast<double>(height);
  return DomainMap{{lo.x + 0.5 * hx, lo.y + 0.5 * hy}, {hx, hy}};
}

GridField::GridField(std::size_t width, std::size_t height, std::size_t channels,
                     DomainMap domain)
    : GridField(width, height, channels, domain,
                std::vector<double>(width * height * channels, 0.0)) {}

GridField::GridField(std::size_t width, std::size_t height, std::size_t channels,
                     DomainMap domain, std::vector<double> data)
    : width_(width), height_(height), channels_(channels), domain_(domain),
      data_(std::move(data)) {
  if (width < 2 || height < 2) throw FieldError("field must be at least 2x2");
  if (channels < 1 || channels > 3) throw FieldError("field channels must be 1, 2 or 3");
  if (!(domain.spacing.x > 0.0) || !(domain.spacing.y > 0.0))
    throw FieldError("domain spacing must be positive");
  if (data_.size() != width * height * channels)
    throw FieldError("field data length does not match width*height*channels");
}

GridField GridField::zeros(std::size_t width, std::size_t height, std::size_t channels) {
  return GridField(width, height, channels, DomainMap::letterboxed(width, height));
}

std::vector<Vec2> GridGeometry::cell_centers() const {
  std::vector<Vec2> out;
  out.reserve(cell_count());
  for (std::size_t j = 0; j < height; ++j)
    for (std::size_t i = 0; i < width; ++i) out.push_back(cell_center(i, j));
  return out;
}

namespace {

// Continuous index along one axis, clamped to [0, n-1].
void axis_stencil(double coord, double origin, double spacing, std::size_t n,
                  std::size_t& i0, double& t, double& dt_dx) {
  double f = (coord - origin) / spacing;
  dt_dx = 1.0 / spacing;
  const double hi = static_cast<double>(n - 1);
  if (f <= 0.0) {
    f = 0.0;
    dt_dx = 0.0;
  } else if (f >= hi) {
    f = hi;
    dt_dx = 0.0;
  }
  auto base = static_cast<std::size_t>(std::floor(f));
  if (base > n - 2) base = n - 2;
  i0 = base;
  t = f - static_cast<double>(base);
}

}  // namespace

BilinearStencil GridGeometry::stencil(Vec2 p) const {
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw FieldError("invalid sample point");
  BilinearStencil s;
  axis_stencil(p.x, domain.origin.x, domain.spacing.x, width, s.i0, s.tx, s.dtx_dx);
  axis_stencil(p.y, domain.origin.y, domain.spacing.y, height, s.j0, s.ty, s.dty_dy);
  return s;
}

void sample_bilinear(const GridField& field, Vec2 p, std::span<double> out) {
  const BilinearStencil s = field.stencil(p);
  const std::size_t c = field.channels();
  const auto d = field.data();
  const std::size_t w = field.width();
  const double* p00 = &d[(s.j0 * w + s.i0) * c];
  const double* p10 = p00 + c;
  const double* p01 = p00 + w * c;
  const double* p11 = p01 + c;
  for (std::size_t k = 0; k < c; ++k) {
    const double bottom = p00[k] + s.tx * (p10[k] - p00[k]);
    const double top = p01[k] + s.tx * (p11[k] - p01[k]);
    out[k] = bottom + s.ty * (top - bottom);
  }
}

std::vector<double> sample_bilinear(const GridField& field, Vec2 p) {
  std::vector<double> out(field.channels());
  sample_bilinear(field, p, out);
  return out;
}

namespace {

// d/d(axis) of channel c at (i, j); second order everywhere.
double axis_derivative(const GridField& f, std::size_t i, std::size_t j, std::size_t c,
                       bool along_x) {
  const std::size_t n = along_x ? f.width() : f.height();
  const std::size_t k = along_x ? i : j;
  const double h = along_x ? f.domain().spacing.x : f.domain().spacing.y;
  auto v = [&](std::size_t m) { return along_x ? f.at(m, j, c) : f.at(i, m, c); };
  if (n == 2) return (v(1) - v(0)) / h;
  if (k == 0) return (-3.0 * v(0) + 4.0 * v(1) - v(2)) / (2.0 * h);
  if (k == n - 1) return (3.0 * v(n - 1) - 4.0 * v(n - 2) + v(n - 3)) / (2.0 * h);
  return (v(k + 1) - v(k - 1)) / (2.0 * h);
}

template <typename Combine>
GridField derivative_field(const GridField& vel, Combine combine) {
  if (vel.channels() != 2) throw FieldError("velocity field must have 2 channels");
  GridField out(vel.width(), vel.height(), 1, vel.domain());
  for (std::size_t j = 0; j < vel.height(); ++j) {
    for (std::size_t i = 0; i < vel.width(); ++i) {
      const double du_dx = axis_derivative(vel, i, j, 0, true);
      const double du_dy = axis_derivative(vel, i, j, 0, false);
      const double dv_dx = axis_derivative(vel, i, j, 1, true);
      const double dv_dy = axis_derivative(vel, i, j, 1, false);
      out.at(i, j) = combine(du_dx, du_dy, dv_dx, dv_dy);
    }
  }
  return out;
}

}  // namespace

GridField vorticity_field(const GridField& vel) {
  return derivative_field(vel, [](double, double du_dy, double dv_dx, double) {
    return dv_dx - du_dy;
  });
}

GridField divergence_field(const GridField& vel) {
  return derivative_field(vel, [](double du_dx, double, double, double dv_dy) {
    return du_dx + dv_dy;
  });
}

std::vector<Vec2> grid_centers(std::size_t w, std::size_t h, Vec2 lo, Vec2 hi) {
  std::vector<Vec2> out;
  out.reserve(w * h);
  const double hx = (hi.x - lo.x) / static_cast<double>(w);
  const double hy = (hi.y - lo.y) / static_cast<double>(h);
  for (std::size_t j = 0; j < h; ++j)
    for (std::size_t i = 0; i < w; ++i)
      out.push_back({lo.x + (static_cast<double>(i) + 0.5) * hx,
                     lo.y + (static_cast<double>(j) + 0.5) * hy});
  return out;
}

}  // namespace dvp
