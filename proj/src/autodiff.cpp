#include "dvp/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace dvp::ad {

std::string to_string(Shape s) {
  return "[" + std::to_string(s.rows) + "x" + std::to_string(s.cols) + "]";
}

Tensor::Tensor(std::string n, Shape s, std::vector<double> d)
    : name(std::move(n)), shape(s), data(std::move(d)) {
  if (data.size() != shape.size())
    throw ShapeError("tensor " + name + ": data length does not match " + to_string(shape));
}

Shape Var::shape() const { return tape_->shape(*this); }
std::span<const double> Var::value() const { return tape_->value(*this); }
bool Var::needs_grad() const { return tape_->needs_grad(*this); }

double Var::item() const {
  if (shape().size() != 1) throw ShapeError("item() on non-scalar node " + to_string(shape()));
  return value()[0];
}

Var Tape::constant(std::vector<double> values, Shape shape) {
  if (values.size() != shape.size()) throw ShapeError("constant: value length mismatch");
  nodes_.push_back(Node{shape, std::move(values), {}, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(std::vector<double> values, Shape shape) {
  if (values.size() != shape.size()) throw ShapeError("variable: value length mismatch");
  nodes_.push_back(Node{shape, std::move(values), {}, true, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Shape shape, std::vector<double> value, std::initializer_list<Var> inputs,
                 BackwardFn backward) {
  return record(shape, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::record(Shape shape, std::vector<double> value, std::span<const Var> inputs,
                 BackwardFn backward) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw std::logic_error("tape: input recorded on another tape");
    needs = needs || nodes_[in.id()].needs_grad;
  }
  nodes_.push_back(Node{shape, std::move(value), {}, needs, needs ? std::move(backward) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

std::span<double> Tape::grad_sink(Var v) {
  Node& n = nodes_[v.id()];
  if (!n.needs_grad) return {};
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

std::vector<double> Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return std::vector<double>(n.value.size(), 0.0);
  return n.grad;
}

void Tape::backward(Var seed) {
  if (shape(seed).size() != 1) throw ShapeError("backward: seed must be scalar, got " + to_string(shape(seed)));
  for (Node& n : nodes_) n.grad.clear();
  auto g = grad_sink(seed);
  if (g.empty()) return;
  g[0] = 1.0;
  for (std::size_t k = seed.id() + 1; k-- > 0;) {
    Node& n = nodes_[k];
    if (!n.backward || n.grad.empty()) continue;
    // The rule may grow earlier nodes' grad vectors but never this one.
    std::span<const double> out_grad(n.grad);
    n.backward(*this, out_grad);
  }
}

namespace {

template <typename F, typename D>
Var unary(Var a, F f, D df) {
  Tape& t = a.tape();
  const auto av = a.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return t.record(a.shape(), std::move(out), {a}, [a, df](Tape& tape, std::span<const double> g) {
    auto ga = tape.grad_sink(a);
    const auto av = a.value();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * df(av[i]);
  });
}

struct Broadcast {
  Shape out;
  std::size_t a_rs, a_cs, b_rs, b_cs;  // row / column strides (0 when broadcast)

  std::size_t ai(std::size_t r, std::size_t c) const { return r * a_rs + c * a_cs; }
  std::size_t bi(std::size_t r, std::size_t c) const { return r * b_rs + c * b_cs; }
};

Broadcast broadcast(Shape a, Shape b, const char* op) {
  auto dim = [&](std::size_t x, std::size_t y) {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(a) + " with " + to_string(b));
  };
  Broadcast bc;
  bc.out = {dim(a.rows, b.rows), dim(a.cols, b.cols)};
  bc.a_rs = a.rows == 1 ? 0 : a.cols;
  bc.a_cs = a.cols == 1 ? 0 : 1;
  bc.b_rs = b.rows == 1 ? 0 : b.cols;
  bc.b_cs = b.cols == 1 ? 0 : 1;
  return bc;
}

// f(x, y) with partials (dfdx, dfdy) evaluated from inputs and output.
template <typename F, typename DA, typename DB>
Var binary(Var a, Var b, const char* op, F f, DA dfa, DB dfb) {
  const Broadcast bc = broadcast(a.shape(), b.shape(), op);
  const auto av = a.value();
  const auto bv = b.value();
  std::vector<double> out(bc.out.size());
  for (std::size_t r = 0; r < bc.out.rows; ++r)
    for (std::size_t c = 0; c < bc.out.cols; ++c)
      out[r * bc.out.cols + c] = f(av[bc.ai(r, c)], bv[bc.bi(r, c)]);
  return a.tape().record(bc.out, std::move(out), {a, b},
                         [a, b, bc, dfa, dfb](Tape& tape, std::span<const double> g) {
    auto ga = tape.grad_sink(a);
    auto gb = tape.grad_sink(b);
    const auto av = a.value();
    const auto bv = b.value();
    for (std::size_t r = 0; r < bc.out.rows; ++r) {
      for (std::size_t c = 0; c < bc.out.cols; ++c) {
        const double go = g[r * bc.out.cols + c];
        const double x = av[bc.ai(r, c)];
        const double y = bv[bc.bi(r, c)];
        if (!ga.empty()) ga[bc.ai(r, c)] += go * dfa(x, y);
        if (!gb.empty()) gb[bc.bi(r, c)] += go * dfb(x, y);
      }
    }
  });
}

}  // namespace

Var neg(Var a) {
  return unary(a, [](double x) { return -x; }, [](double) { return -1.0; });
}
Var sin(Var a) {
  return unary(a, [](double x) { return std::sin(x); }, [](double x) { return std::cos(x); });
}
Var cos(Var a) {
  return unary(a, [](double x) { return std::cos(x); }, [](double x) { return -std::sin(x); });
}
Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}
Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}
Var sqrt(Var a) {
  return unary(a, [](double x) { return std::sqrt(x); },
               [](double x) { return 0.5 / std::sqrt(x); });
}
Var sigmoid(Var a) {
  auto s = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  return unary(a, s, [s](double x) {
    const double y = s(x);
    return y * (1.0 - y);
  });
}
Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}
Var pow(Var a, double e) {
  return unary(a, [e](double x) { return std::pow(x, e); },
               [e](double x) { return e * std::pow(x, e - 1.0); });
}
Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double) { return s; });
}
Var add_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double) { return 1.0; });
}

Var add(Var a, Var b) {
  return binary(a, b, "add", [](double x, double y) { return x + y; },
                [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}
Var sub(Var a, Var b) {
  return binary(a, b, "sub", [](double x, double y) { return x - y; },
                [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}
Var mul(Var a, Var b) {
  return binary(a, b, "mul", [](double x, double y) { return x * y; },
                [](double, double y) { return y; }, [](double x, double) { return x; });
}
Var div(Var a, Var b) {
  return binary(a, b, "div", [](double x, double y) { return x / y; },
                [](double, double y) { return 1.0 / y; },
                [](double x, double y) { return -x / (y * y); });
}

Var sum(Var a) {
  const auto av = a.value();
  double s = 0.0;
  for (double x : av) s += x;
  return a.tape().record({1, 1}, {s}, {a}, [a](Tape& tape, std::span<const double> g) {
    for (double& x : tape.grad_sink(a)) x += g[0];
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.shape().size());
  return scale(sum(a), 1.0 / n);
}

Var dot(Var a, Var b) {
  if (a.shape().size() != b.shape().size())
    throw ShapeError("dot: size mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  const auto av = a.value();
  const auto bv = b.value();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  return a.tape().record({1, 1}, {s}, {a, b}, [a, b](Tape& tape, std::span<const double> g) {
    auto ga = tape.grad_sink(a);
    auto gb = tape.grad_sink(b);
    const auto av = a.value();
    const auto bv = b.value();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0] * bv[i];
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[0] * av[i];
  });
}

Var row_sum(Var a) {
  const Shape s = a.shape();
  const auto av = a.value();
  std::vector<double> out(s.rows, 0.0);
  for (std::size_t r = 0; r < s.rows; ++r)
    for (std::size_t c = 0; c < s.cols; ++c) out[r] += av[r * s.cols + c];
  return a.tape().record({s.rows, 1}, std::move(out), {a},
                         [a, s](Tape& tape, std::span<const double> g) {
    auto ga = tape.grad_sink(a);
    for (std::size_t r = 0; r < s.rows; ++r)
      for (std::size_t c = 0; c < s.cols; ++c) ga[r * s.cols + c] += g[r];
  });
}

Var col_sum(Var a) {
  const Shape s = a.shape();
  const auto av = a.value();
  std::vector<double> out(s.cols, 0.0);
  for (std::size_t r = 0; r < s.rows; ++r)
    for (std::size_t c = 0; c < s.cols; ++c) out[c] += av[r * s.cols + c];
  return a.tape().record({1, s.cols}, std::move(out), {a},
                         [a, s](Tape& tape, std::span<const double> g) {
    auto ga = tape.grad_sink(a);
    for (std::size_t r = 0; r < s.rows; ++r)
      for (std::size_t c = 0; c < s.cols; ++c) ga[r * s.cols + c] += g[c];
  });
}

namespace {

Var affine_impl(Var x, Var w, const Var* bias) {
  const Shape xs = x.shape();
  const Shape ws = w.shape();
  if (xs.cols != ws.cols)
    throw ShapeError("affine: input " + to_string(xs) + " incompatible with weight " + to_string(ws));
  if (bias && bias->shape() != Shape{1, ws.rows})
    throw ShapeError("affine: bias must be [1x" + std::to_string(ws.rows) + "]");
  const std::size_t batch = xs.rows, in = xs.cols, out_dim = ws.rows;
  const auto xv = x.value();
  const auto wv = w.value();
  std::vector<double> out(batch * out_dim);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xr = &xv[b * in];
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double* wr = &wv[o * in];
      double s = bias ? bias->value()[o] : 0.0;
      for (std::size_t i = 0; i < in; ++i) s += wr[i] * xr[i];
      out[b * out_dim + o] = s;
    }
  }
  auto rule = [x, w, bias_var = bias ? *bias : Var{}, batch, in, out_dim](
                  Tape& tape, std::span<const double> g) {
    auto gx = tape.grad_sink(x);
    auto gw = tape.grad_sink(w);
    const auto xv = x.value();
    const auto wv = w.value();
    if (!gx.empty()) {
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < out_dim; ++o) {
          const double go = g[b * out_dim + o];
          if (go == 0.0) continue;
          const double* wr = &wv[o * in];
          double* gxr = &gx[b * in];
          for (std::size_t i = 0; i < in; ++i) gxr[i] += go * wr[i];
        }
    }
    if (!gw.empty()) {
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < out_dim; ++o) {
          const double go = g[b * out_dim + o];
          if (go == 0.0) continue;
          const double* xr = &xv[b * in];
          double* gwr = &gw[o * in];
          for (std::size_t i = 0; i < in; ++i) gwr[i] += go * xr[i];
        }
    }
    if (bias_var.valid()) {
      auto gb = tape.grad_sink(bias_var);
      if (!gb.empty())
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t o = 0; o < out_dim; ++o) gb[o] += g[b * out_dim + o];
    }
  };
  Tape& t = x.tape();
  if (bias) return t.record({batch, out_dim}, std::move(out), {x, w, *bias}, std::move(rule));
  return t.record({batch, out_dim}, std::move(out), {x, w}, std::move(rule));
}

}  // namespace

Var affine(Var x, Var weight, Var bias) { return affine_impl(x, weight, &bias); }
Var affine(Var x, Var weight) { return affine_impl(x, weight, nullptr); }

Var reshape(Var a, Shape shape) {
  if (shape.size() != a.shape().size())
    throw ShapeError("reshape: " + to_string(a.shape()) + " to " + to_string(shape));
  const auto av = a.value();
  return a.tape().record(shape, std::vector<double>(av.begin(), av.end()), {a},
                         [a](Tape& tape, std::span<const double> g) {
    auto ga = tape.grad_sink(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Shape s = a.shape();
  if (begin >= end || end > s.cols) throw ShapeError("slice_cols: bad range on " + to_string(s));
  const std::size_t w = end - begin;
  const auto av = a.value();
  std::vector<double> out(s.rows * w);
  for (std::size_t r = 0; r < s.rows; ++r)
    for (std::size_t c = 0; c < w; ++c) out[r * w + c] = av[r * s.cols + begin + c];
  return a.tape().record({s.rows, w}, std::move(out), {a},
                         [a, s, begin, w](Tape& tape, std::span<const double> g) {
    auto ga = tape.grad_sink(a);
    for (std::size_t r = 0; r < s.rows; ++r)
      for (std::size_t c = 0; c < w; ++c) ga[r * s.cols + begin + c] += g[r * w + c];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts[0].shape().rows;
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.shape().rows != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p.shape().cols;
  }
  std::vector<double> out(rows * cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const auto pv = p.value();
    const std::size_t pc = p.shape().cols;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < pc; ++c) out[r * cols + offset + c] = pv[r * pc + c];
    offset += pc;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape().record({rows, cols}, std::move(out), parts,
                                [inputs, rows, cols](Tape& tape, std::span<const double> g) {
    std::size_t offset = 0;
    for (const Var& p : inputs) {
      const std::size_t pc = p.shape().cols;
      auto gp = tape.grad_sink(p);
      if (!gp.empty())
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < pc; ++c) gp[r * pc + c] += g[r * cols + offset + c];
      offset += pc;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = parts[0].shape().cols;
  std::vector<double> out;
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.shape().cols != cols) throw ShapeError("concat_rows: column count mismatch");
    const auto pv = p.value();
    out.insert(out.end(), pv.begin(), pv.end());
    rows += p.shape().rows;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape().record({rows, cols}, std::move(out), parts,
                                [inputs](Tape& tape, std::span<const double> g) {
    std::size_t offset = 0;
    for (const Var& p : inputs) {
      auto gp = tape.grad_sink(p);
      const std::size_t n = p.shape().size();
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset + i];
      offset += n;
    }
  });
}

Var tile_rows(Var a, std::size_t times) {
  const Shape s = a.shape();
  const auto av = a.value();
  std::vector<double> out;
  out.reserve(s.size() * times);
  for (std::size_t k = 0; k < times; ++k) out.insert(out.end(), av.begin(), av.end());
  return a.tape().record({s.rows * times, s.cols}, std::move(out), {a},
                         [a, times](Tape& tape, std::span<const double> g) {
    auto ga = tape.grad_sink(a);
    const std::size_t n = ga.size();
    for (std::size_t k = 0; k < times; ++k)
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[k * n + i];
  });
}

Var repeat_rows(Var a, std::size_t times) {
  const Shape s = a.shape();
  const auto av = a.value();
  std::vector<double> out;
  out.reserve(s.size() * times);
  for (std::size_t r = 0; r < s.rows; ++r)
    for (std::size_t k = 0; k < times; ++k)
      out.insert(out.end(), av.begin() + r * s.cols, av.begin() + (r + 1) * s.cols);
  return a.tape().record({s.rows * times, s.cols}, std::move(out), {a},
                         [a, s, times](Tape& tape, std::span<const double> g) {
    auto ga = tape.grad_sink(a);
    for (std::size_t r = 0; r < s.rows; ++r)
      for (std::size_t k = 0; k < times; ++k)
        for (std::size_t c = 0; c < s.cols; ++c)
          ga[r * s.cols + c] += g[(r * times + k) * s.cols + c];
  });
}

Var clamp(Var x, Var lo, Var hi) {
  const Shape s = x.shape();
  if (lo.shape() != s || hi.shape() != s) throw ShapeError("clamp: bound shapes must match input");
  const auto xv = x.value();
  const auto lv = lo.value();
  const auto hv = hi.value();
  std::vector<double> out(s.size());
  // 0 = passthrough, 1 = lower bound, 2 = upper bound
  std::vector<unsigned char> branch(s.size(), 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (xv[i] < lv[i]) {
      out[i] = lv[i];
      branch[i] = 1;
    } else if (xv[i] > hv[i]) {
      out[i] = hv[i];
      branch[i] = 2;
    } else {
      out[i] = xv[i];
    }
  }
  return x.tape().record(s, std::move(out), {x, lo, hi},
                         [x, lo, hi, branch = std::move(branch)](Tape& tape, std::span<const double> g) {
    auto gx = tape.grad_sink(x);
    auto gl = tape.grad_sink(lo);
    auto gh = tape.grad_sink(hi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (branch[i] == 0) {
        if (!gx.empty()) gx[i] += g[i];
      } else if (branch[i] == 1) {
        if (!gl.empty()) gl[i] += g[i];
      } else if (!gh.empty()) {
        gh[i] += g[i];
      }
    }
  });
}

namespace {

void check_field(Var field, const GridGeometry& geo, Var points, const char* op) {
  if (field.shape().rows != geo.cell_count())
    throw ShapeError(std::string(op) + ": field rows do not match grid cell count");
  if (points.shape().cols != 2) throw ShapeError(std::string(op) + ": points must be [N x 2]");
}

}  // namespace

Var bilinear_sample(Var field, const GridGeometry& geo, Var points) {
  check_field(field, geo, points, "bilinear_sample");
  const std::size_t channels = field.shape().cols;
  const std::size_t n = points.shape().rows;
  const std::size_t w = geo.width;
  const auto fv = field.value();
  const auto pv = points.value();
  std::vector<BilinearStencil> stencils(n);
  std::vector<double> out(n * channels);
  for (std::size_t k = 0; k < n; ++k) {
    const BilinearStencil s = geo.stencil({pv[2 * k], pv[2 * k + 1]});
    stencils[k] = s;
    const double* p00 = &fv[(s.j0 * w + s.i0) * channels];
    const double* p10 = p00 + channels;
    const double* p01 = p00 + w * channels;
    const double* p11 = p01 + channels;
    for (std::size_t c = 0; c < channels; ++c) {
      const double bottom = p00[c] + s.tx * (p10[c] - p00[c]);
      const double top = p01[c] + s.tx * (p11[c] - p01[c]);
      out[k * channels + c] = bottom + s.ty * (top - bottom);
    }
  }
  return field.tape().record({n, channels}, std::move(out), {field, points},
      [field, points, w, channels, stencils = std::move(stencils)](Tape& tape,
                                                                    std::span<const double> g) {
    auto gf = tape.grad_sink(field);
    auto gp = tape.grad_sink(points);
    const auto fv = field.value();
    for (std::size_t k = 0; k < stencils.size(); ++k) {
      const BilinearStencil& s = stencils[k];
      const std::size_t base = (s.j0 * w + s.i0) * channels;
      const std::size_t i00 = base, i10 = base + channels, i01 = base + w * channels,
                        i11 = i01 + channels;
      double dx = 0.0, dy = 0.0;
      for (std::size_t c = 0; c < channels; ++c) {
        const double go = g[k * channels + c];
        if (!gf.empty()) {
          gf[i00 + c] += go * (1.0 - s.tx) * (1.0 - s.ty);
          gf[i10 + c] += go * s.tx * (1.0 - s.ty);
          gf[i01 + c] += go * (1.0 - s.tx) * s.ty;
          gf[i11 + c] += go * s.tx * s.ty;
        }
        const double f00 = fv[i00 + c], f10 = fv[i10 + c], f01 = fv[i01 + c], f11 = fv[i11 + c];
        dx += go * ((f10 - f00) * (1.0 - s.ty) + (f11 - f01) * s.ty);
        dy += go * ((f01 - f00) * (1.0 - s.tx) + (f11 - f10) * s.tx);
      }
      if (!gp.empty()) {
        gp[2 * k] += dx * s.dtx_dx;
        gp[2 * k + 1] += dy * s.dty_dy;
      }
    }
  });
}

namespace {

template <typename Better>
Var stencil_extreme(Var field, const GridGeometry& geo, Var points, Better better,
                    const char* op) {
  check_field(field, geo, points, op);
  const std::size_t channels = field.shape().cols;
  const std::size_t n = points.shape().rows;
  const std::size_t w = geo.width;
  const auto fv = field.value();
  const auto pv = points.value();
  std::vector<double> out(n * channels);
  std::vector<std::size_t> source(n * channels);
  for (std::size_t k = 0; k < n; ++k) {
    const BilinearStencil s = geo.stencil({pv[2 * k], pv[2 * k + 1]});
    const std::size_t base = (s.j0 * w + s.i0) * channels;
    const std::size_t corners[4] = {base, base + channels, base + w * channels,
                                    base + w * channels + channels};
    for (std::size_t c = 0; c < channels; ++c) {
      std::size_t best = corners[0] + c;
      for (int q = 1; q < 4; ++q)
        if (better(fv[corners[q] + c], fv[best])) best = corners[q] + c;
      out[k * channels + c] = fv[best];
      source[k * channels + c] = best;
    }
  }
  return field.tape().record({n, channels}, std::move(out), {field, points},
      [field, source = std::move(source)](Tape& tape, std::span<const double> g) {
    auto gf = tape.grad_sink(field);
    if (gf.empty()) return;
    for (std::size_t i = 0; i < source.size(); ++i) gf[source[i]] += g[i];
  });
}

}  // namespace

Var stencil_min(Var field, const GridGeometry& geo, Var points) {
  return stencil_extreme(field, geo, points, [](double a, double b) { return a < b; },
                         "stencil_min");
}

Var stencil_max(Var field, const GridGeometry& geo, Var points) {
  return stencil_extreme(field, geo, points, [](double a, double b) { return a > b; },
                         "stencil_max");
}

}  // namespace dvp::ad
