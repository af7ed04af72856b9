// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <limits>

#include "vg3s/autodiff.hpp"
#include "vg3s/gaussian.hpp"
#include "vg3s/grid.hpp"
#include "vg3s/voxel.hpp"

namespace vg3s {

/// Per-primitive contributions are capped here so that log(1 - alpha) stays finite.
inline constexpr double kAlphaMax = 1.0 - 1e-12;

struct SplatOptions {
  /// Culling radius in multiples of the largest scale; infinity disables culling.
  double kappa = 3.0;
  unsigned workers = 1;
};

/// Occupancy o = 1 - prod(1 - alpha_i) and semantics sum(alpha_i softmax(c_i)) / sum(alpha_i)
/// at every voxel center, with alpha_i = a_i exp(-d_i / 2) and d_i the squared
/// Mahalanobis distance. Voxels accumulate primitives in ascending index order.
OccupancyGrid splat(const GaussianSet& set, const GridSpec& grid, const SplatOptions& opts = {});

/// Brute-force reference: explicit covariance inverse, no culling, plain product.
/// Limited to 1000 primitives and 32 voxels per axis.
OccupancyGrid splat_oracle(const GaussianSet& set, const GridSpec& grid);

/// Differentiable splat returning per-voxel class distributions [V, C + 1]:
/// column c < C holds o * semantics_c and column C holds 1 - o (empty).
/// `opacity` is the activated opacity [J]; `rotations` need not be unit length.
Var splat_distribution(Var means, Var scales, Var rotations, Var opacity, Var logits, const GridSpec& grid,
                       const SplatOptions& opts = {});

}  // namespace vg3s
