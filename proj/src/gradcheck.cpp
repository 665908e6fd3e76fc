#include "dvp/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace dvp::ad {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const TapeFunction& fn, std::span<const Tensor> point) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(point.size());
  for (const Tensor& t : point) leaves.push_back(tape.constant(t));
  return fn(tape, leaves).item();
}

}  // namespace

std::vector<std::vector<double>> gradient(const TapeFunction& fn, std::span<const Tensor> point) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(point.size());
  for (const Tensor& t : point) leaves.push_back(tape.variable(t));
  Var out = fn(tape, leaves);
  tape.backward(out);
  std::vector<std::vector<double>> grads;
  for (const Var& v : leaves) grads.push_back(tape.grad(v));
  return grads;
}

GradCheckResult grad_check(const TapeFunction& fn, std::span<const Tensor> point,
                           const GradCheckOptions& opt) {
  const auto analytic = gradient(fn, point);
  std::vector<Tensor> probe(point.begin(), point.end());
  std::mt19937_64 rng(opt.seed);
  GradCheckResult result;
  result.leaf_max_rel_error.assign(point.size(), 0.0);

  for (std::size_t leaf = 0; leaf < probe.size(); ++leaf) {
    std::vector<std::size_t> coords(probe[leaf].data.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opt.max_coords_per_leaf > 0 && coords.size() > opt.max_coords_per_leaf) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opt.max_coords_per_leaf);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t idx : coords) {
      double& x = probe[leaf].data[idx];
      const double saved = x;
      x = saved + opt.step;
      const double fp = evaluate(fn, probe);
      x = saved - opt.step;
      const double fm = evaluate(fn, probe);
      x = saved;
      const double numeric = (fp - fm) / (2.0 * opt.step);
      const double err = relative_error(analytic[leaf][idx], numeric, opt.abs_floor);
      ++result.coords_checked;
      result.leaf_max_rel_error[leaf] = std::max(result.leaf_max_rel_error[leaf], err);
      if (err > result.max_rel_error || result.coords_checked == 1) {
        result.max_rel_error = std::max(result.max_rel_error, err);
        result.worst_leaf = leaf;
        result.worst_index = idx;
        result.worst_analytic = analytic[leaf][idx];
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace dvp::ad
