#pragma once

/// \file
/// Reverse-mode automatic differentiation on a Wengert tape of 2-D tensors.
///
/// Every node holds a row-major `rows x cols` block of doubles. Operations
/// append nodes in evaluation order, so the tape is topologically sorted by
/// construction; `Tape::backward` sweeps it once in reverse. Nodes that do not
/// depend on any variable leaf drop their derivative rule and are skipped.
///
/// Elementwise binary ops broadcast along a dimension of extent 1, which
/// covers scalar, per-row and per-column operands.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dvp/field.hpp"

namespace dvp::ad {

struct Shape {
  std::size_t rows = 1;
  std::size_t cols = 1;

  std::size_t size() const { return rows * cols; }
  friend bool operator==(Shape, Shape) = default;
};

std::string to_string(Shape s);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A named block of parameter or leaf values.
struct Tensor {
  std::string name;
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::string n, Shape s) : name(std::move(n)), shape(s), data(s.size(), 0.0) {}
  Tensor(std::string n, Shape s, std::vector<double> d);

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

class Tape;

/// Lightweight handle to a tape node.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  Shape shape() const;
  std::span<const double> value() const;
  /// Value of a 1x1 node.
  double item() const;
  bool needs_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the output adjoint; accumulates into input adjoints via grad_sink.
  using BackwardFn = std::function<void(Tape&, std::span<const double>)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(std::vector<double> values, Shape shape);
  Var constant(double v) { return constant({v}, {1, 1}); }
  Var constant(const Tensor& t) { return constant(t.data, t.shape); }
  /// Leaf whose adjoint is populated by backward().
  Var variable(std::vector<double> values, Shape shape);
  Var variable(const Tensor& t) { return variable(t.data, t.shape); }

  /// Appends a node computed from `inputs`. The rule is kept only when some
  /// input needs a gradient.
  Var record(Shape shape, std::vector<double> value, std::initializer_list<Var> inputs,
             BackwardFn backward);
  Var record(Shape shape, std::vector<double> value, std::span<const Var> inputs,
             BackwardFn backward);

  /// Reverse sweep seeded with d(seed)/d(seed) = 1. Seed must be 1x1.
  void backward(Var seed);

  Shape shape(Var v) const { return nodes_[v.id()].shape; }
  std::span<const double> value(Var v) const { return nodes_[v.id()].value; }
  bool needs_grad(Var v) const { return nodes_[v.id()].needs_grad; }

  /// Adjoint of a node after backward(); zeros if it never received any.
  std::vector<double> grad(Var v) const;

  /// Mutable adjoint buffer for accumulation inside a rule, allocated on
  /// first use. Empty span when the node does not need a gradient.
  std::span<double> grad_sink(Var v);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool needs_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// Elementwise unary.
Var neg(Var a);
Var sin(Var a);
Var cos(Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var sigmoid(Var a);
Var square(Var a);
Var pow(Var a, double exponent);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);

// Elementwise binary with broadcasting.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

// Reductions.
Var sum(Var a);
Var mean(Var a);
Var dot(Var a, Var b);
/// Sum across columns: [r, c] -> [r, 1].
Var row_sum(Var a);
/// Sum across rows: [r, c] -> [1, c].
Var col_sum(Var a);

/// x [B, in] times W^T [in, out] plus optional bias [1, out].
Var affine(Var x, Var weight, Var bias);
Var affine(Var x, Var weight);

// Structural.
Var reshape(Var a, Shape shape);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
/// [r, c] -> [times * r, c]; row k is input row k % r.
Var tile_rows(Var a, std::size_t times);
/// [r, c] -> [r * times, c]; row k is input row k / times.
Var repeat_rows(Var a, std::size_t times);

/// Elementwise clamp of x into [lo, hi] (same shapes). The adjoint follows the
/// active branch: x inside the interval, otherwise the bound that was hit.
Var clamp(Var x, Var lo, Var hi);

/// Samples a field stored as [cells, channels] at points [N, 2]. Differentiable
/// in both the field values and the point coordinates (edge-clamped).
Var bilinear_sample(Var field, const GridGeometry& geometry, Var points);

/// Per-point minimum / maximum over the four cells of the bilinear stencil.
/// The adjoint goes to the selected cell.
Var stencil_min(Var field, const GridGeometry& geometry, Var points);
Var stencil_max(Var field, const GridGeometry& geometry, Var points);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator+(Var a, double s) { return add_scalar(a, s); }
inline Var operator-(Var a, double s) { return add_scalar(a, -s); }

}  // namespace dvp::ad
