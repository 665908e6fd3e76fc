#pragma once

/// \file
/// Central-difference verification of tape gradients.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dvp/autodiff.hpp"

namespace dvp::ad {

/// Builds a scalar node from leaves recorded on the given tape.
using TapeFunction = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckOptions {
  double step = 1e-6;
  /// Gradients smaller than this are compared in absolute terms.
  double abs_floor = 1e-6;
  /// 0 checks every coordinate; otherwise a seeded subset per leaf.
  std::size_t max_coords_per_leaf = 0;
  std::uint64_t seed = 1;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_leaf = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
  /// Per-leaf maxima, same order as the input point.
  std::vector<double> leaf_max_rel_error;
};

/// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor);

/// Compares backward() against central differences of `fn` at `point`.
GradCheckResult grad_check(const TapeFunction& fn, std::span<const Tensor> point,
                           const GradCheckOptions& options = {});

/// Gradient of `fn` at `point` by one reverse sweep.
std::vector<std::vector<double>> gradient(const TapeFunction& fn, std::span<const Tensor> point);

}  // namespace dvp::ad
