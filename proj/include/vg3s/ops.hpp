// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "vg3s/autodiff.hpp"

// Differentiable operations recorded on a Tape. Feature maps are laid out
// channels-last: [height, width, channels].

namespace vg3s {

inline constexpr double kLayerNormEps = 1e-6;

// Elementwise binary ops with right-aligned (numpy-style) broadcasting.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

Var scale(Var x, double factor);
Var add_scalar(Var x, double offset);

Var exp(Var x);
Var sin(Var x);
Var cos(Var x);
Var tanh(Var x);
Var sigmoid(Var x);
Var relu(Var x);
/// Exact form x * Phi(x), Phi the standard normal CDF.
Var gelu(Var x);

/// Clamps to [lo, hi]; bounds broadcast against x. Gradient passes inside the
/// closed interval and is zero outside it.
Var clamp(Var x, const Tensor& lo, const Tensor& hi);

/// Inverted dropout. Identity when `training` is false or p == 0. The mask is a
/// pure function of (seed, site, step, element index).
Var dropout(Var x, double p, std::uint64_t seed, std::uint64_t site, std::uint64_t step, bool training);

Var reshape(Var x, Shape shape);
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);
Var concat(const std::vector<Var>& parts, std::size_t axis);

Var sum(Var x);
Var mean(Var x);
/// Sums out `axis`, removing it from the shape.
Var sum_axis(Var x, std::size_t axis);

/// a: [..., k], b: [k, m] -> [..., m].
Var matmul(Var a, Var b);
/// x W + bias, bias broadcast over rows.
Var linear(Var x, Var weight, Var bias);

Var softmax(Var x, std::size_t axis);
/// Normalizes over the last axis (biased variance + eps), then gain * xhat + bias.
Var layer_norm(Var x, Var gain, Var bias, double eps = kLayerNormEps);
/// Scales each row of a [rows, n] tensor to unit Euclidean norm.
Var normalize_rows(Var x);

enum class ConvMode {
  kDepthwise,   // kernel [kh, kw, C]
  kPointwise,   // kernel [Cin, Cout]; stride 1, no padding
  kStrided,     // kernel [kh, kw, Cin, Cout]
  kTransposed,  // kernel [kh, kw, Cin, Cout]; output (H-1)*stride - 2*padding + kh
};

Var conv2d(Var x, Var kernel, ConvMode mode, std::size_t stride = 1, std::size_t padding = 0);

/// [H, W, C] -> [C], the spatial mean per channel.
Var global_avg_pool(Var x);

/// Samples a [H, W, C] map at normalized coordinates uv [P, 2] (u across the
/// width, v down the height, both in [0, 1]). Cell centers sit at
/// ((j + 0.5) / W, (i + 0.5) / H); coordinates beyond the outer centers clamp to
/// the border. Returns [P, C].
Var bilinear_sample(Var map, Var uv);

}  // namespace vg3s
