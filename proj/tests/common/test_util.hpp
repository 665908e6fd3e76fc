#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dvp/field.hpp"

namespace dvp::test {

/// Letterboxed square field filled from f(x, y) -> channel values.
inline GridField sample_field(std::size_t n, std::size_t channels,
                              const std::function<std::vector<double>(double, double)>& f) {
  GridField g(n, n, channels, DomainMap::letterboxed(n, n));
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 p = g.cell_center(i, j);
      const auto v = f(p.x, p.y);
      for (std::size_t c = 0; c < channels; ++c) g.at(i, j, c) = v[c];
    }
  return g;
}

inline double interior_max_abs_error(const GridField& f, double expected, std::size_t margin = 1) {
  double worst = 0.0;
  for (std::size_t j = margin; j + margin < f.height(); ++j)
    for (std::size_t i = margin; i + margin < f.width(); ++i)
      worst = std::max(worst, std::abs(f.at(i, j) - expected));
  return worst;
}

/// Largest absolute difference; infinity when the shapes differ.
inline double max_abs_diff(const GridField& a, const GridField& b) {
  if (a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels())
    return INFINITY;
  double worst = 0.0;
  for (std::size_t k = 0; k < a.data().size(); ++k) worst = std::max(worst, std::abs(a.data()[k] - b.data()[k]));
  return worst;
}

inline std::vector<double> random_values(std::size_t n, std::uint64_t seed, double lo = -1.0,
                                         double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

}  // namespace dvp::test
