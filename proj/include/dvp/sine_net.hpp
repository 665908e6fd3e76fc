#pragma once

/// \file
/// Residual networks of sine-activated linear layers.
///
/// Each block maps x to sin(W2 sin(W1 x + b1) + b2) + S(x), where S is the
/// identity when the block keeps its width and a learned bias-free linear
/// projection otherwise. A final linear head produces the output. Weights
/// follow the uniform fan-in initialization of sinusoidal representation
/// networks with frequency factor 1.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dvp/autodiff.hpp"

namespace dvp {

class SineResNet {
 public:
  SineResNet() = default;
  SineResNet(std::string prefix, std::size_t input_dim, std::vector<std::size_t> widths,
             std::size_t output_dim);

  void initialize(std::mt19937_64& rng);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return output_dim_; }
  const std::vector<std::size_t>& widths() const { return widths_; }
  const std::string& prefix() const { return prefix_; }

  std::vector<ad::Tensor>& params() { return params_; }
  const std::vector<ad::Tensor>& params() const { return params_; }

  /// Head weight [output_dim, last width] and bias [1, output_dim].
  ad::Tensor& head_weight() { return params_[params_.size() - 2]; }
  ad::Tensor& head_bias() { return params_.back(); }

  /// Records every parameter on the tape, as variables or constants.
  std::vector<ad::Var> bind(ad::Tape& tape, bool trainable) const;

  /// x: [batch, input_dim] -> [batch, output_dim].
  ad::Var forward(std::span<const ad::Var> bound, ad::Var x) const;

  /// Forward value plus its directional derivative along x_dot (same shape
  /// as x), both as tape nodes.
  std::pair<ad::Var, ad::Var> forward_tangent(std::span<const ad::Var> bound, ad::Var x,
                                              ad::Var x_dot) const;

  /// Output of the last residual block (before the head).
  std::pair<ad::Var, ad::Var> features_tangent(std::span<const ad::Var> bound, ad::Var x,
                                               ad::Var x_dot) const;

 private:
  struct BlockLayout {
    std::size_t in = 0;
    std::size_t width = 0;
    std::size_t first_param = 0;
    bool projected = false;
  };

  std::string prefix_;
  std::size_t input_dim_ = 0;
  std::size_t output_dim_ = 0;
  std::vector<std::size_t> widths_;
  std::vector<BlockLayout> blocks_;
  std::vector<ad::Tensor> params_;
};

}  // namespace dvp
