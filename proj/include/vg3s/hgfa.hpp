// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vg3s/autodiff.hpp"
#include "vg3s/params.hpp"
#include "vg3s/tokens.hpp"

namespace vg3s {

struct HgfaConfig {
  std::size_t groups = 4;               // K
  std::size_t layers_per_group = 2;     // M
  std::vector<double> expansion_ratios{4, 3, 2, 1.5};
  std::vector<std::size_t> pyramid_dims{96, 64, 48, 32};
  std::vector<double> scale_factors{4, 2, 1, 0.5};
  std::size_t target_dim = 32;          // D
  std::size_t se_reduction = 4;
  double dropout = 0.1;
  bool se_bypass = false;  // forces the channel gate to ones

  /// Throws ConfigError unless K*M == layers, the per-group lists have K
  /// entries, every scale factor is a power of two with integral extents and
  /// every hidden width is at least one.
  void validate(std::size_t layers, std::size_t channels, std::size_t patch_h, std::size_t patch_w) const;

  std::size_t hidden_dim(std::size_t group, std::size_t channels) const;
  /// Level extent (rows, cols) of group k for an h x w patch grid.
  std::pair<std::size_t, std::size_t> level_extent(std::size_t group, std::size_t h, std::size_t w) const;
  /// Flattened token count per view: L * sum(tau_k^2).
  std::size_t flattened_tokens(std::size_t h, std::size_t w) const;
};

/// Registers every adapter parameter under "hgfa.". Scoring-head output, FFN
/// output and spatial residual projection start at zero.
void init_hgfa_params(ParamStore& store, const HgfaConfig& cfg, std::size_t channels, Rng& rng);

/// Layer indices of each group: group k holds layers k*M .. k*M + M - 1.
std::vector<std::vector<std::size_t>> partition_groups(std::size_t layers, const HgfaConfig& cfg);

struct GatfResult {
  Var fused;    // [L, D^V]
  Var weights;  // [M, L], columns sum to one
};

/// Softmax-over-layers weighted sum of `layers` ([L, D^V] each), then layer norm.
GatfResult gatf_fuse(const Bound& p, std::size_t group, const std::vector<Var>& layers);

/// x + FFN(x) with a GELU hidden layer of floor(rho_k * D^V) units and dropout.
Var tatr_refine(const Bound& p, std::size_t group, Var fused, const HgfaConfig& cfg, bool training,
                std::uint64_t seed, std::uint64_t step);

/// F' + PW(SE(DW(F'))) with F' the tokens laid out as an [h, w, D^V] map.
Var lsfp_spatial_block(const Bound& p, std::size_t group, Var refined, std::size_t h, std::size_t w,
                       const HgfaConfig& cfg);

/// Fixed 2D sinusoidal embedding [h, w, channels]: the first half of the
/// channels encodes the row, the second half the column.
Tensor sinusoidal_embedding(std::size_t h, std::size_t w, std::size_t channels);

struct FeaturePyramid {
  std::vector<Var> levels;  // level k: [tau_k h, tau_k w, D]

  /// All levels as one [sum_k tau_k^2 L, D] token sequence, level by level, row-major.
  Var flattened() const;
};

/// Projects, embeds, resamples and re-projects each spatial map into a pyramid level.
FeaturePyramid lsfp_pyramid(const Bound& p, const std::vector<Var>& spatial, const HgfaConfig& cfg);

/// Full adapter on one view. `layers` holds the N token tensors [L, D^V].
FeaturePyramid hgfa_view(const Bound& p, const std::vector<Var>& layers, std::size_t h, std::size_t w,
                         const HgfaConfig& cfg, bool training, std::uint64_t seed, std::uint64_t step);

/// Adapter over every view with shared parameters; tokens enter as constants.
std::vector<FeaturePyramid> hgfa_forward(const Bound& p, const TokenStack& stack, const HgfaConfig& cfg,
                                         bool training, std::uint64_t seed, std::uint64_t step);

}  // namespace vg3s
