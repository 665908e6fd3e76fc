#include "dvp/sine_net.hpp"

#include <cmath>
#include <stdexcept>

namespace dvp {

using ad::Shape;
using ad::Tensor;
using ad::Var;

SineResNet::SineResNet(std::string prefix, std::size_t input_dim,
                       std::vector<std::size_t> widths, std::size_t output_dim)
    : prefix_(std::move(prefix)), input_dim_(input_dim), output_dim_(output_dim),
      widths_(std::move(widths)) {
  if (widths_.empty()) throw std::invalid_argument("SineResNet needs at least one block");
  std::size_t in = input_dim_;
  for (std::size_t b = 0; b < widths_.size(); ++b) {
    const std::size_t w = widths_[b];
    const std::string base = prefix_ + ".block" + std::to_string(b);
    BlockLayout layout{in, w, params_.size(), in != w};
    params_.emplace_back(base + ".w1", Shape{w, in});
    params_.emplace_back(base + ".b1", Shape{1, w});
    params_.emplace_back(base + ".w2", Shape{w, w});
    params_.emplace_back(base + ".b2", Shape{1, w});
    if (layout.projected) params_.emplace_back(base + ".proj", Shape{w, in});
    blocks_.push_back(layout);
    in = w;
  }
  params_.emplace_back(prefix_ + ".head.w", Shape{output_dim_, in});
  params_.emplace_back(prefix_ + ".head.b", Shape{1, output_dim_});
}

void SineResNet::initialize(std::mt19937_64& rng) {
  auto fill = [&rng](Tensor& t, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& v : t.data) v = u(rng);
  };
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const BlockLayout& L = blocks_[b];
    const double fan_in = static_cast<double>(L.in);
    // The very first layer sees raw coordinates; later layers use sqrt(6/fan_in).
    const double first_bound = b == 0 ? 1.0 / fan_in : std::sqrt(6.0 / fan_in);
    const double hidden_bound = std::sqrt(6.0 / static_cast<double>(L.width));
    fill(params_[L.first_param], first_bound);
    fill(params_[L.first_param + 1], 1.0 / std::sqrt(fan_in));
    fill(params_[L.first_param + 2], hidden_bound);
    fill(params_[L.first_param + 3], 1.0 / std::sqrt(static_cast<double>(L.width)));
    if (L.projected) fill(params_[L.first_param + 4], first_bound);
  }
  const double last = static_cast<double>(widths_.back());
  fill(head_weight(), std::sqrt(6.0 / last));
  fill(head_bias(), 1.0 / std::sqrt(last));
}

std::vector<Var> SineResNet::bind(ad::Tape& tape, bool trainable) const {
  std::vector<Var> out;
  out.reserve(params_.size());
  for (const Tensor& t : params_) out.push_back(trainable ? tape.variable(t) : tape.constant(t));
  return out;
}

std::pair<Var, Var> SineResNet::features_tangent(std::span<const Var> p, Var x,
                                                 Var x_dot) const {
  if (p.size() != params_.size()) throw std::invalid_argument(prefix_ + ": wrong parameter count");
  if (x.shape().cols != input_dim_)
    throw ad::ShapeError(prefix_ + ": input width " + std::to_string(x.shape().cols) +
                         ", expected " + std::to_string(input_dim_));
  const bool tangent = x_dot.valid();
  for (const BlockLayout& L : blocks_) {
    const Var w1 = p[L.first_param], b1 = p[L.first_param + 1];
    const Var w2 = p[L.first_param + 2], b2 = p[L.first_param + 3];
    const Var z1 = ad::affine(x, w1, b1);
    const Var h1 = ad::sin(z1);
    const Var z2 = ad::affine(h1, w2, b2);
    const Var h2 = ad::sin(z2);
    const Var skip = L.projected ? ad::affine(x, p[L.first_param + 4]) : x;
    Var next_dot;
    if (tangent) {
      const Var h1_dot = ad::cos(z1) * ad::affine(x_dot, w1);
      const Var h2_dot = ad::cos(z2) * ad::affine(h1_dot, w2);
      const Var skip_dot = L.projected ? ad::affine(x_dot, p[L.first_param + 4]) : x_dot;
      next_dot = h2_dot + skip_dot;
    }
    x = h2 + skip;
    x_dot = next_dot;
  }
  return {x, x_dot};
}

std::pair<Var, Var> SineResNet::forward_tangent(std::span<const Var> p, Var x, Var x_dot) const {
  auto [features, features_dot] = features_tangent(p, x, x_dot);
  const Var hw = p[p.size() - 2], hb = p[p.size() - 1];
  const Var out = ad::affine(features, hw, hb);
  const Var out_dot = features_dot.valid() ? ad::affine(features_dot, hw) : Var{};
  return {out, out_dot};
}

Var SineResNet::forward(std::span<const Var> p, Var x) const {
  return forward_tangent(p, x, Var{}).first;
}

}  // namespace dvp
