// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#include "vg3s/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "vg3s/error.hpp"
#include "vg3s/rng.hpp"

namespace vg3s {
namespace {

Tape& same_tape(std::initializer_list<Var> vars) {
  Tape* tape = nullptr;
  for (Var v : vars) {
    if (!v.valid()) throw std::invalid_argument("empty Var passed to op");
    if (tape && v.tape() != tape) throw std::invalid_argument("op inputs live on different tapes");
    tape = v.tape();
  }
  return *tape;
}

// ---------------------------------------------------------------------------
// Broadcasting

struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a;  // per output axis, 0 where broadcast
  std::vector<std::size_t> stride_b;
  bool same = false;
};

std::vector<std::size_t> aligned_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t in_axis = in.size() - 1 - k;
    const std::size_t out_axis = out.size() - 1 - k;
    strides[out_axis] = in[in_axis] == 1 ? 0 : stride;
    stride *= in[in_axis];
  }
  return strides;
}

Broadcast broadcast_shapes(const Shape& a, const Shape& b) {
  Broadcast bc;
  if (a == b) {
    bc.out = a;
    bc.same = true;
    return bc;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  bc.out.assign(rank, 1);
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t da = k < a.size() ? a[a.size() - 1 - k] : 1;
    const std::size_t db = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    bc.out[rank - 1 - k] = da == 1 ? db : da;
  }
  bc.stride_a = aligned_strides(a, bc.out);
  bc.stride_b = aligned_strides(b, bc.out);
  return bc;
}

// Calls f(i, ia, ib) for every output element in row-major order.
template <typename F>
void for_each_broadcast(const Broadcast& bc, F&& f) {
  const std::size_t n = shape_numel(bc.out);
  if (bc.same) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  const std::size_t rank = bc.out.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (std::size_t i = 0; i < n; ++i) {
    f(i, ia, ib);
    for (std::size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      ia += bc.stride_a[ax];
      ib += bc.stride_b[ax];
      if (idx[ax] < bc.out[ax]) break;
      ia -= bc.stride_a[ax] * idx[ax];
      ib -= bc.stride_b[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
}

enum class BinaryKind { kAdd, kSub, kMul };

Var binary(Var a, Var b, BinaryKind kind, const char* name) {
  Tape& tape = same_tape({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Broadcast bc = broadcast_shapes(av.shape(), bv.shape());
  Tensor out(bc.out);
  auto o = out.data();
  auto ad = av.data();
  auto bd = bv.data();
  for_each_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    switch (kind) {
      case BinaryKind::kAdd: o[i] = ad[ia] + bd[ib]; break;
      case BinaryKind::kSub: o[i] = ad[ia] - bd[ib]; break;
      case BinaryKind::kMul: o[i] = ad[ia] * bd[ib]; break;
    }
  });
  return tape.record(name, std::move(out), {a, b}, [&tape, a, b, kind, bc](const Tensor& g, const Tensor&) {
    Tensor* ga = tape.grad_slot(a);
    Tensor* gb = tape.grad_slot(b);
    auto gd = g.data();
    std::span<double> gad = ga ? ga->data() : std::span<double>{};
    std::span<double> gbd = gb ? gb->data() : std::span<double>{};
    auto ad = a.value().data();
    auto bd = b.value().data();
    for_each_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      switch (kind) {
        case BinaryKind::kAdd:
          if (ga) gad[ia] += gd[i];
          if (gb) gbd[ib] += gd[i];
          break;
        case BinaryKind::kSub:
          if (ga) gad[ia] += gd[i];
          if (gb) gbd[ib] -= gd[i];
          break;
        case BinaryKind::kMul:
          if (ga) gad[ia] += gd[i] * bd[ib];
          if (gb) gbd[ib] += gd[i] * ad[ia];
          break;
      }
    });
  });
}

// Elementwise unary op given value and derivative functions of (x, y).
template <typename Fwd, typename Deriv>
Var unary(Var x, const char* name, Fwd fwd, Deriv deriv) {
  Tape& tape = same_tape({x});
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  auto xd = xv.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(xd[i]);
  return tape.record(name, std::move(out), {x}, [&tape, x, deriv](const Tensor& g, const Tensor& y) {
    Tensor* gx = tape.grad_slot(x);
    auto xd = x.value().data();
    auto yd = y.data();
    auto gd = g.data();
    auto gxd = gx->data();
    for (std::size_t i = 0; i < gd.size(); ++i) gxd[i] += gd[i] * deriv(xd[i], yd[i]);
  });
}

double normal_cdf(double x) { return 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 * 0.5)); }

std::size_t outer_of(const Shape& s, std::size_t axis) {
  std::size_t n = 1;
  for (std::size_t i = 0; i < axis; ++i) n *= s[i];
  return n;
}

std::size_t inner_of(const Shape& s, std::size_t axis) {
  std::size_t n = 1;
  for (std::size_t i = axis + 1; i < s.size(); ++i) n *= s[i];
  return n;
}

void check_axis(const Tensor& t, std::size_t axis, const char* op) {
  if (axis >= t.rank()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(t.shape()));
  }
}

void require_map(const Tensor& t, const char* op) {
  if (t.rank() != 3) throw ShapeError(std::string(op) + ": expected [H, W, C] map, got " + shape_str(t.shape()));
}

}  // namespace

// ---------------------------------------------------------------------------

Var add(Var a, Var b) { return binary(a, b, BinaryKind::kAdd, "add"); }
Var sub(Var a, Var b) { return binary(a, b, BinaryKind::kSub, "sub"); }
Var mul(Var a, Var b) { return binary(a, b, BinaryKind::kMul, "mul"); }

Var scale(Var x, double factor) {
  return unary(
      x, "scale", [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Var add_scalar(Var x, double offset) {
  return unary(
      x, "add_scalar", [offset](double v) { return v + offset; }, [](double, double) { return 1.0; });
}

Var exp(Var x) {
  return unary(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var sin(Var x) {
  return unary(
      x, "sin", [](double v) { return std::sin(v); }, [](double v, double) { return std::cos(v); });
}

Var cos(Var x) {
  return unary(
      x, "cos", [](double v) { return std::cos(v); }, [](double v, double) { return -std::sin(v); });
}

Var tanh(Var x) {
  return unary(
      x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var x) {
  return unary(
      x, "relu", [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Var gelu(Var x) {
  return unary(
      x, "gelu", [](double v) { return v * normal_cdf(v); },
      [](double v, double) {
        const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
        return normal_cdf(v) + v * pdf;
      });
}

Var clamp(Var x, const Tensor& lo, const Tensor& hi) {
  Tape& tape = same_tape({x});
  const Tensor& xv = x.value();
  Broadcast bl = broadcast_shapes(xv.shape(), lo.shape());
  Broadcast bh = broadcast_shapes(xv.shape(), hi.shape());
  if (bl.out != xv.shape() || bh.out != xv.shape()) {
    throw ShapeError("clamp bounds must broadcast to the input shape " + shape_str(xv.shape()));
  }
  Tensor out(xv.shape());
  Tensor pass(xv.shape(), 0.0);
  auto xd = xv.data();
  auto o = out.data();
  auto p = pass.data();
  std::vector<double> lo_full(o.size());
  for_each_broadcast(bl, [&](std::size_t i, std::size_t, std::size_t il) { lo_full[i] = lo[il]; });
  for_each_broadcast(bh, [&](std::size_t i, std::size_t, std::size_t ih) {
    const double l = lo_full[i];
    const double h = hi[ih];
    if (l > h) throw std::invalid_argument("clamp: lower bound above upper bound");
    o[i] = std::min(std::max(xd[i], l), h);
    p[i] = (xd[i] >= l && xd[i] <= h) ? 1.0 : 0.0;
  });
  return tape.record("clamp", std::move(out), {x}, [&tape, x, pass](const Tensor& g, const Tensor&) {
    Tensor* gx = tape.grad_slot(x);
    auto gxd = gx->data();
    for (std::size_t i = 0; i < gxd.size(); ++i) gxd[i] += g[i] * pass[i];
  });
}

Var dropout(Var x, double p, std::uint64_t seed, std::uint64_t site, std::uint64_t step, bool training) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout probability must lie in [0, 1)");
  if (!training || p == 0.0) return x;
  Tape& tape = same_tape({x});
  const Tensor& xv = x.value();
  Tensor mask(xv.shape());
  const double keep_scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < mask.numel(); ++i) {
    mask[i] = hash_uniform(seed, site, step, i) >= p ? keep_scale : 0.0;
  }
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xv[i] * mask[i];
  return tape.record("dropout", std::move(out), {x}, [&tape, x, mask](const Tensor& g, const Tensor&) {
    Tensor* gx = tape.grad_slot(x);
    auto gxd = gx->data();
    for (std::size_t i = 0; i < gxd.size(); ++i) gxd[i] += g[i] * mask[i];
  });
}

// ---------------------------------------------------------------------------
// Shape ops

Var reshape(Var x, Shape shape) {
  Tape& tape = same_tape({x});
  Tensor out = x.value().reshaped(std::move(shape));
  return tape.record("reshape", std::move(out), {x}, [&tape, x](const Tensor& g, const Tensor&) {
    Tensor* gx = tape.grad_slot(x);
    auto gxd = gx->data();
    auto gd = g.data();
    for (std::size_t i = 0; i < gxd.size(); ++i) gxd[i] += gd[i];
  });
}

Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end) {
  Tape& tape = same_tape({x});
  const Tensor& xv = x.value();
  check_axis(xv, axis, "slice");
  if (begin > end || end > xv.dim(axis)) {
    throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for axis " +
                     std::to_string(axis) + " of " + shape_str(xv.shape()));
  }
  const std::size_t outer = outer_of(xv.shape(), axis);
  const std::size_t inner = inner_of(xv.shape(), axis);
  const std::size_t n = xv.dim(axis);
  const std::size_t len = end - begin;
  Shape shape = xv.shape();
  shape[axis] = len;
  Tensor out(shape);
  for (std::size_t o = 0; o < outer; ++o) {
    const double* src = xv.data().data() + (o * n + begin) * inner;
    std::copy(src, src + len * inner, out.data().data() + o * len * inner);
  }
  return tape.record("slice", std::move(out), {x}, [&tape, x, outer, inner, n, begin, len](const Tensor& g, const Tensor&) {
    Tensor* gx = tape.grad_slot(x);
    for (std::size_t o = 0; o < outer; ++o) {
      double* dst = gx->data().data() + (o * n + begin) * inner;
      const double* src = g.data().data() + o * len * inner;
      for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
    }
  });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat of zero tensors");
  Tape& tape = same_tape({parts.front()});
  const Shape& first = parts.front().shape();
  check_axis(parts.front().value(), axis, "concat");
  std::size_t total = 0;
  for (Var p : parts) {
    if (p.tape() != &tape) throw std::invalid_argument("op inputs live on different tapes");
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat rank mismatch");
    for (std::size_t ax = 0; ax < s.size(); ++ax) {
      if (ax != axis && s[ax] != first[ax]) {
        throw ShapeError("concat extent mismatch: " + shape_str(s) + " vs " + shape_str(first));
      }
    }
    total += s[axis];
  }
  const std::size_t outer = outer_of(first, axis);
  const std::size_t inner = inner_of(first, axis);
  Shape shape = first;
  shape[axis] = total;
  Tensor out(shape);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (Var p : parts) {
    const std::size_t len = p.shape()[axis];
    offsets.push_back(offset);
    for (std::size_t o = 0; o < outer; ++o) {
      const double* src = p.value().data().data() + o * len * inner;
      std::copy(src, src + len * inner, out.data().data() + (o * total + offset) * inner);
    }
    offset += len;
  }
  return tape.record("concat", std::move(out), parts,
                     [&tape, parts, offsets, outer, inner, total, axis](const Tensor& g, const Tensor&) {
                       for (std::size_t k = 0; k < parts.size(); ++k) {
                         Tensor* gp = tape.grad_slot(parts[k]);
                         if (!gp) continue;
                         const std::size_t len = parts[k].shape()[axis];
                         for (std::size_t o = 0; o < outer; ++o) {
                           const double* src = g.data().data() + (o * total + offsets[k]) * inner;
                           double* dst = gp->data().data() + o * len * inner;
                           for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                         }
                       }
                     });
}

// ---------------------------------------------------------------------------
// Reductions

Var sum(Var x) {
  Tape& tape = same_tape({x});
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return tape.record("sum", Tensor::scalar(s), {x}, [&tape, x](const Tensor& g, const Tensor&) {
    Tensor* gx = tape.grad_slot(x);
    const double gv = g[0];
    for (double& v : gx->data()) v += gv;
  });
}

Var mean(Var x) {
  const std::size_t n = x.value().numel();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var sum_axis(Var x, std::size_t axis) {
  Tape& tape = same_tape({x});
  const Tensor& xv = x.value();
  check_axis(xv, axis, "sum_axis");
  const std::size_t outer = outer_of(xv.shape(), axis);
  const std::size_t inner = inner_of(xv.shape(), axis);
  const std::size_t n = xv.dim(axis);
  Shape shape = xv.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor out(shape, 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < n; ++k) {
      const double* src = xv.data().data() + (o * n + k) * inner;
      double* dst = out.data().data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  return tape.record("sum_axis", std::move(out), {x}, [&tape, x, outer, inner, n](const Tensor& g, const Tensor&) {
    Tensor* gx = tape.grad_slot(x);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t k = 0; k < n; ++k) {
        double* dst = gx->data().data() + (o * n + k) * inner;
        const double* src = g.data().data() + o * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

Var matmul(Var a, Var b) {
  Tape& tape = same_tape({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (bv.rank() != 2) throw ShapeError("matmul: right operand must be rank 2, got " + shape_str(bv.shape()));
  if (av.rank() < 1 || av.shape().back() != bv.dim(0)) {
    throw ShapeError("matmul: inner extents differ, " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  const std::size_t k = bv.dim(0);
  const std::size_t m = bv.dim(1);
  const std::size_t rows = av.numel() / k;
  Shape shape = av.shape();
  shape.back() = m;
  Tensor out(shape, 0.0);
  const double* ad = av.data().data();
  const double* bd = bv.data().data();
  double* od = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double* orow = od + r * m;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double s = ad[r * k + kk];
      const double* brow = bd + kk * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += s * brow[j];
    }
  }
  return tape.record("matmul", std::move(out), {a, b}, [&tape, a, b, rows, k, m](const Tensor& g, const Tensor&) {
    Tensor* ga = tape.grad_slot(a);
    Tensor* gb = tape.grad_slot(b);
    const double* ad = a.value().data().data();
    const double* bd = b.value().data().data();
    const double* gd = g.data().data();
    if (ga) {
      double* gad = ga->data().data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* grow = gd + r * m;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const double* brow = bd + kk * m;
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += grow[j] * brow[j];
          gad[r * k + kk] += s;
        }
      }
    }
    if (gb) {
      double* gbd = gb->data().data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* grow = gd + r * m;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const double s = ad[r * k + kk];
          double* gbrow = gbd + kk * m;
          for (std::size_t j = 0; j < m; ++j) gbrow[j] += s * grow[j];
        }
      }
    }
  });
}

Var linear(Var x, Var weight, Var bias) { return add(matmul(x, weight), bias); }

// ---------------------------------------------------------------------------
// Normalization

Var softmax(Var x, std::size_t axis) {
  Tape& tape = same_tape({x});
  const Tensor& xv = x.value();
  check_axis(xv, axis, "softmax");
  const std::size_t outer = outer_of(xv.shape(), axis);
  const std::size_t inner = inner_of(xv.shape(), axis);
  const std::size_t n = xv.dim(axis);
  Tensor out(xv.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      double mx = xv[base];
      for (std::size_t k = 1; k < n; ++k) mx = std::max(mx, xv[base + k * inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double e = std::exp(xv[base + k * inner] - mx);
        out[base + k * inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < n; ++k) out[base + k * inner] /= z;
    }
  }
  return tape.record("softmax", std::move(out), {x}, [&tape, x, outer, inner, n](const Tensor& g, const Tensor& yv) {
    Tensor* gx = tape.grad_slot(x);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = o * n * inner + i;
        double dot = 0.0;
        for (std::size_t k = 0; k < n; ++k) dot += g[base + k * inner] * yv[base + k * inner];
        for (std::size_t k = 0; k < n; ++k) {
          const std::size_t at = base + k * inner;
          (*gx)[at] += yv[at] * (g[at] - dot);
        }
      }
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& tape = same_tape({x, gain, bias});
  const Tensor& xv = x.value();
  if (xv.rank() == 0) throw ShapeError("layer_norm needs at least one axis");
  const std::size_t c = xv.shape().back();
  if (gain.value().numel() != c || bias.value().numel() != c) {
    throw ShapeError("layer_norm: gain/bias length must equal last-axis extent " + std::to_string(c));
  }
  const std::size_t rows = xv.numel() / c;
  Tensor xhat(xv.shape());
  std::vector<double> rstd(rows);
  Tensor out(xv.shape());
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data().data() + r * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(c);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (row[j] - mu) * rstd[r];
      xhat[r * c + j] = h;
      out[r * c + j] = gv[j] * h + bv[j];
    }
  }
  return tape.record("layer_norm", std::move(out), {x, gain, bias},
                     [&tape, x, gain, bias, xhat, rstd, rows, c](const Tensor& g, const Tensor&) {
                       Tensor* gx = tape.grad_slot(x);
                       Tensor* gg = tape.grad_slot(gain);
                       Tensor* gb = tape.grad_slot(bias);
                       const Tensor& gv = gain.value();
                       std::vector<double> dxhat(c);
                       for (std::size_t r = 0; r < rows; ++r) {
                         double mean_d = 0.0;
                         double mean_dx = 0.0;
                         for (std::size_t j = 0; j < c; ++j) {
                           const double gj = g[r * c + j];
                           if (gg) (*gg)[j] += gj * xhat[r * c + j];
                           if (gb) (*gb)[j] += gj;
                           dxhat[j] = gj * gv[j];
                           mean_d += dxhat[j];
                           mean_dx += dxhat[j] * xhat[r * c + j];
                         }
                         if (!gx) continue;
                         mean_d /= static_cast<double>(c);
                         mean_dx /= static_cast<double>(c);
                         for (std::size_t j = 0; j < c; ++j) {
                           (*gx)[r * c + j] += rstd[r] * (dxhat[j] - mean_d - xhat[r * c + j] * mean_dx);
                         }
                       }
                     });
}

Var normalize_rows(Var x) {
  Tape& tape = same_tape({x});
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw ShapeError("normalize_rows expects [rows, n], got " + shape_str(xv.shape()));
  const std::size_t rows = xv.dim(0);
  const std::size_t n = xv.dim(1);
  Tensor out(xv.shape());
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += xv[r * n + j] * xv[r * n + j];
    norms[r] = std::sqrt(s);
    if (norms[r] < 1e-12) throw NumericError("normalize_rows: row " + std::to_string(r) + " has near-zero norm");
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = xv[r * n + j] / norms[r];
  }
  return tape.record("normalize_rows", std::move(out), {x}, [&tape, x, norms, rows, n](const Tensor& g, const Tensor& yv) {
    Tensor* gx = tape.grad_slot(x);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += yv[r * n + j] * g[r * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        (*gx)[r * n + j] += (g[r * n + j] - yv[r * n + j] * dot) / norms[r];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Spatial ops

Var conv2d(Var x, Var kernel, ConvMode mode, std::size_t stride, std::size_t padding) {
  Tape& tape = same_tape({x, kernel});
  const Tensor& xv = x.value();
  const Tensor& kv = kernel.value();
  require_map(xv, "conv2d");
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  const std::size_t h = xv.dim(0);
  const std::size_t w = xv.dim(1);
  const std::size_t cin = xv.dim(2);

  std::size_t kh = 1, kw = 1, cout = 0;
  switch (mode) {
    case ConvMode::kDepthwise:
      if (kv.rank() != 3 || kv.dim(2) != cin) {
        throw ShapeError("depthwise conv: kernel " + shape_str(kv.shape()) + " does not match " +
                         std::to_string(cin) + " channels");
      }
      kh = kv.dim(0);
      kw = kv.dim(1);
      cout = cin;
      break;
    case ConvMode::kPointwise:
      if (kv.rank() != 2 || kv.dim(0) != cin) {
        throw ShapeError("pointwise conv: kernel " + shape_str(kv.shape()) + " does not match " +
                         std::to_string(cin) + " input channels");
      }
      if (stride != 1 || padding != 0) throw std::invalid_argument("pointwise conv takes stride 1, no padding");
      cout = kv.dim(1);
      break;
    case ConvMode::kStrided:
    case ConvMode::kTransposed:
      if (kv.rank() != 4 || kv.dim(2) != cin) {
        throw ShapeError("conv: kernel " + shape_str(kv.shape()) + " does not match " + std::to_string(cin) +
                         " input channels");
      }
      kh = kv.dim(0);
      kw = kv.dim(1);
      cout = kv.dim(3);
      break;
  }

  std::size_t ho = 0, wo = 0;
  if (mode == ConvMode::kTransposed) {
    const std::ptrdiff_t th = static_cast<std::ptrdiff_t>((h - 1) * stride + kh) - 2 * static_cast<std::ptrdiff_t>(padding);
    const std::ptrdiff_t tw = static_cast<std::ptrdiff_t>((w - 1) * stride + kw) - 2 * static_cast<std::ptrdiff_t>(padding);
    if (th < 1 || tw < 1) throw ShapeError("transposed conv: empty output extent");
    ho = static_cast<std::size_t>(th);
    wo = static_cast<std::size_t>(tw);
  } else {
    if (h + 2 * padding < kh || w + 2 * padding < kw) throw ShapeError("conv2d: kernel larger than padded input");
    ho = (h + 2 * padding - kh) / stride + 1;
    wo = (w + 2 * padding - kw) / stride + 1;
  }

  const auto sp = static_cast<std::ptrdiff_t>(padding);
  const auto ss = static_cast<std::ptrdiff_t>(stride);
  // Visits every (output pixel, input pixel, kernel tap) triple in a fixed order.
  auto taps = [=](auto&& f) {
    if (mode == ConvMode::kTransposed) {
      for (std::size_t iy = 0; iy < h; ++iy)
        for (std::size_t ix = 0; ix < w; ++ix)
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(iy) * ss - sp + static_cast<std::ptrdiff_t>(ky);
            if (oy < 0 || oy >= static_cast<std::ptrdiff_t>(ho)) continue;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(ix) * ss - sp + static_cast<std::ptrdiff_t>(kx);
              if (ox < 0 || ox >= static_cast<std::ptrdiff_t>(wo)) continue;
              f(static_cast<std::size_t>(oy), static_cast<std::size_t>(ox), iy, ix, ky, kx);
            }
          }
      return;
    }
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox)
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * ss - sp + static_cast<std::ptrdiff_t>(ky);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * ss - sp + static_cast<std::ptrdiff_t>(kx);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            f(oy, ox, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), ky, kx);
          }
        }
  };

  Tensor out(Shape{ho, wo, cout}, 0.0);
  const double* xd = xv.data().data();
  const double* kd = kv.data().data();
  double* od = out.data().data();
  if (mode == ConvMode::kDepthwise) {
    taps([&](std::size_t oy, std::size_t ox, std::size_t iy, std::size_t ix, std::size_t ky, std::size_t kx) {
      const double* xp = xd + (iy * w + ix) * cin;
      const double* kp = kd + (ky * kw + kx) * cin;
      double* op = od + (oy * wo + ox) * cin;
      for (std::size_t c = 0; c < cin; ++c) op[c] += xp[c] * kp[c];
    });
  } else {
    taps([&](std::size_t oy, std::size_t ox, std::size_t iy, std::size_t ix, std::size_t ky, std::size_t kx) {
      const double* xp = xd + (iy * w + ix) * cin;
      const double* kp = kd + (ky * kw + kx) * cin * cout;
      double* op = od + (oy * wo + ox) * cout;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double s = xp[ci];
        const double* krow = kp + ci * cout;
        for (std::size_t co = 0; co < cout; ++co) op[co] += s * krow[co];
      }
    });
  }

  const char* name = mode == ConvMode::kDepthwise    ? "conv2d_depthwise"
                     : mode == ConvMode::kPointwise  ? "conv2d_pointwise"
                     : mode == ConvMode::kStrided    ? "conv2d_strided"
                                                     : "conv2d_transposed";
  return tape.record(name, std::move(out), {x, kernel},
                     [&tape, x, kernel, mode, taps, w, wo, cin, cout, kw](const Tensor& g, const Tensor&) {
                       Tensor* gx = tape.grad_slot(x);
                       Tensor* gk = tape.grad_slot(kernel);
                       const double* xd = x.value().data().data();
                       const double* kd = kernel.value().data().data();
                       const double* gd = g.data().data();
                       double* gxd = gx ? gx->data().data() : nullptr;
                       double* gkd = gk ? gk->data().data() : nullptr;
                       if (mode == ConvMode::kDepthwise) {
                         taps([&](std::size_t oy, std::size_t ox, std::size_t iy, std::size_t ix, std::size_t ky,
                                  std::size_t kx) {
                           const double* gp = gd + (oy * wo + ox) * cin;
                           const std::size_t xo = (iy * w + ix) * cin;
                           const std::size_t ko = (ky * kw + kx) * cin;
                           for (std::size_t c = 0; c < cin; ++c) {
                             if (gxd) gxd[xo + c] += gp[c] * kd[ko + c];
                             if (gkd) gkd[ko + c] += gp[c] * xd[xo + c];
                           }
                         });
                         return;
                       }
                       taps([&](std::size_t oy, std::size_t ox, std::size_t iy, std::size_t ix, std::size_t ky,
                                std::size_t kx) {
                         const double* gp = gd + (oy * wo + ox) * cout;
                         const std::size_t xo = (iy * w + ix) * cin;
                         const std::size_t ko = (ky * kw + kx) * cin * cout;
                         for (std::size_t ci = 0; ci < cin; ++ci) {
                           const double* krow = kd + ko + ci * cout;
                           if (gxd) {
                             double s = 0.0;
                             for (std::size_t co = 0; co < cout; ++co) s += gp[co] * krow[co];
                             gxd[xo + ci] += s;
                           }
                           if (gkd) {
                             const double xs = xd[xo + ci];
                             double* gkrow = gkd + ko + ci * cout;
                             for (std::size_t co = 0; co < cout; ++co) gkrow[co] += xs * gp[co];
                           }
                         }
                       });
                     });
}

Var global_avg_pool(Var x) {
  Tape& tape = same_tape({x});
  const Tensor& xv = x.value();
  require_map(xv, "global_avg_pool");
  const std::size_t pixels = xv.dim(0) * xv.dim(1);
  const std::size_t c = xv.dim(2);
  if (pixels == 0) throw ShapeError("global_avg_pool: empty spatial extent");
  Tensor out(Shape{c}, 0.0);
  for (std::size_t p = 0; p < pixels; ++p)
    for (std::size_t j = 0; j < c; ++j) out[j] += xv[p * c + j];
  for (std::size_t j = 0; j < c; ++j) out[j] /= static_cast<double>(pixels);
  return tape.record("global_avg_pool", std::move(out), {x}, [&tape, x, pixels, c](const Tensor& g, const Tensor&) {
    Tensor* gx = tape.grad_slot(x);
    const double inv = 1.0 / static_cast<double>(pixels);
    for (std::size_t p = 0; p < pixels; ++p)
      for (std::size_t j = 0; j < c; ++j) (*gx)[p * c + j] += g[j] * inv;
  });
}

namespace {

struct Axis1d {
  std::size_t i0, i1;
  double frac;
  double dpos;  // d(position)/d(normalized coordinate); 0 when clamped
};

Axis1d bilinear_axis(double coord, std::size_t extent) {
  const double pos = coord * static_cast<double>(extent) - 0.5;
  const double hi = static_cast<double>(extent - 1);
  Axis1d a{};
  double p = pos;
  a.dpos = static_cast<double>(extent);
  if (p <= 0.0) {
    p = 0.0;
    a.dpos = 0.0;
  } else if (p >= hi) {
    p = hi;
    a.dpos = 0.0;
  }
  a.i0 = static_cast<std::size_t>(std::floor(p));
  a.i1 = std::min(a.i0 + 1, extent - 1);
  a.frac = p - static_cast<double>(a.i0);
  return a;
}

}  // namespace

Var bilinear_sample(Var map, Var uv) {
  Tape& tape = same_tape({map, uv});
  const Tensor& mv = map.value();
  const Tensor& uvv = uv.value();
  require_map(mv, "bilinear_sample");
  if (uvv.rank() != 2 || uvv.dim(1) != 2) {
    throw ShapeError("bilinear_sample: coordinates must be [P, 2], got " + shape_str(uvv.shape()));
  }
  const std::size_t h = mv.dim(0);
  const std::size_t w = mv.dim(1);
  const std::size_t c = mv.dim(2);
  const std::size_t points = uvv.dim(0);
  if (h == 0 || w == 0) throw ShapeError("bilinear_sample: empty map");
  std::vector<Axis1d> ax(points), ay(points);
  Tensor out(Shape{points, c}, 0.0);
  for (std::size_t p = 0; p < points; ++p) {
    if (!std::isfinite(uvv[2 * p]) || !std::isfinite(uvv[2 * p + 1])) {
      throw NumericError("bilinear_sample: non-finite coordinate at point " + std::to_string(p));
    }
    ax[p] = bilinear_axis(uvv[2 * p], w);
    ay[p] = bilinear_axis(uvv[2 * p + 1], h);
    const Axis1d& X = ax[p];
    const Axis1d& Y = ay[p];
    const double* v00 = mv.data().data() + (Y.i0 * w + X.i0) * c;
    const double* v01 = mv.data().data() + (Y.i0 * w + X.i1) * c;
    const double* v10 = mv.data().data() + (Y.i1 * w + X.i0) * c;
    const double* v11 = mv.data().data() + (Y.i1 * w + X.i1) * c;
    double* o = out.data().data() + p * c;
    const double w00 = (1 - Y.frac) * (1 - X.frac), w01 = (1 - Y.frac) * X.frac;
    const double w10 = Y.frac * (1 - X.frac), w11 = Y.frac * X.frac;
    for (std::size_t j = 0; j < c; ++j) o[j] = w00 * v00[j] + w01 * v01[j] + w10 * v10[j] + w11 * v11[j];
  }
  return tape.record("bilinear_sample", std::move(out), {map, uv},
                     [&tape, map, uv, ax, ay, points, w, c](const Tensor& g, const Tensor&) {
                       Tensor* gm = tape.grad_slot(map);
                       Tensor* gu = tape.grad_slot(uv);
                       const double* md = map.value().data().data();
                       for (std::size_t p = 0; p < points; ++p) {
                         const Axis1d& X = ax[p];
                         const Axis1d& Y = ay[p];
                         const std::size_t o00 = (Y.i0 * w + X.i0) * c, o01 = (Y.i0 * w + X.i1) * c;
                         const std::size_t o10 = (Y.i1 * w + X.i0) * c, o11 = (Y.i1 * w + X.i1) * c;
                         const double* gp = g.data().data() + p * c;
                         if (gm) {
                           double* gmd = gm->data().data();
                           const double w00 = (1 - Y.frac) * (1 - X.frac), w01 = (1 - Y.frac) * X.frac;
                           const double w10 = Y.frac * (1 - X.frac), w11 = Y.frac * X.frac;
                           for (std::size_t j = 0; j < c; ++j) {
                             gmd[o00 + j] += w00 * gp[j];
                             gmd[o01 + j] += w01 * gp[j];
                             gmd[o10 + j] += w10 * gp[j];
                             gmd[o11 + j] += w11 * gp[j];
                           }
                         }
                         if (gu && (X.dpos != 0.0 || Y.dpos != 0.0)) {
                           double du = 0.0, dv = 0.0;
                           for (std::size_t j = 0; j < c; ++j) {
                             const double dx = (1 - Y.frac) * (md[o01 + j] - md[o00 + j]) +
                                               Y.frac * (md[o11 + j] - md[o10 + j]);
                             const double dy = (1 - X.frac) * (md[o10 + j] - md[o00 + j]) +
                                               X.frac * (md[o11 + j] - md[o01 + j]);
                             du += gp[j] * dx;
                             dv += gp[j] * dy;
                           }
                           (*gu)[2 * p] += du * X.dpos;
                           (*gu)[2 * p + 1] += dv * Y.dpos;
                         }
                       }
                     });
}

}  // namespace vg3s
