// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vg3s/camera.hpp"
#include "vg3s/scene.hpp"
#include "vg3s/tensor.hpp"

namespace vg3s {

enum class TokenDtype : std::uint32_t { kFloat32 = 1, kFloat64 = 2 };

/// Per-view, per-layer patch tokens, stored (view, layer, token, channel).
struct TokenStack {
  std::size_t views = 0;
  std::size_t layers = 0;
  std::size_t patch_h = 0;
  std::size_t patch_w = 0;
  std::size_t channels = 0;
  TokenDtype dtype = TokenDtype::kFloat64;
  std::vector<double> data;

  TokenStack() = default;
  TokenStack(std::size_t s, std::size_t n, std::size_t h, std::size_t w, std::size_t d,
             TokenDtype type = TokenDtype::kFloat64);

  std::size_t tokens_per_view() const noexcept { return patch_h * patch_w; }
  std::size_t index(std::size_t view, std::size_t layer, std::size_t token, std::size_t ch) const noexcept {
    return ((view * layers + layer) * tokens_per_view() + token) * channels + ch;
  }
  double& at(std::size_t view, std::size_t layer, std::size_t token, std::size_t ch) {
    return data[index(view, layer, token, ch)];
  }
  double at(std::size_t view, std::size_t layer, std::size_t token, std::size_t ch) const {
    return data[index(view, layer, token, ch)];
  }

  /// Tokens of one view and layer as an [L, D] tensor.
  Tensor layer(std::size_t view, std::size_t layer) const;

  /// Throws ShapeError on a data size mismatch, ConfigError when the layer
  /// count is not a multiple of `groups`, NumericError on non-finite values.
  void validate(std::size_t groups) const;

  bool operator==(const TokenStack&) const = default;
};

struct TokenConfig {
  std::size_t layers = 8;
  std::size_t groups = 4;  // the adapter's K; layers must be a multiple of it
  std::size_t patch_h = 8;
  std::size_t patch_w = 8;
  std::size_t channels = 32;
  std::size_t num_classes = 4;
  std::size_t rays_per_side = 2;  // rays per patch = rays_per_side^2
  double far = 40.0;              // depth reported for rays that hit nothing
  double noise = 0.02;
  double layer_variation = 0.3;  // weight of the per-layer part of the projection
  TokenDtype dtype = TokenDtype::kFloat64;
};

/// Raw per-patch scene encoding for one camera: [L, 2 + C]. Column 0 is the
/// mean ray depth (cfg.far for misses), columns 1..C+1 are the one-hot
/// majority class with "nothing hit" in the last column.
Tensor encode_patches(const SyntheticScene& scene, const Camera& cam, const TokenConfig& cfg);

/// Deterministic token stack for a synthetic scene: each layer embeds the
/// normalized patch encodings with its own fixed random projection plus noise.
TokenStack generate_synthetic_tokens(const SyntheticScene& scene, const CameraRig& rig, const TokenConfig& cfg,
                                     std::uint64_t seed);

/// Token file: "VG3STOK1", u32 S, N, L, D, h, w, dtype (1 = f32, 2 = f64),
/// then the payload in (view, layer, token, channel) order. Little-endian.
void write_token_file(const TokenStack& stack, const std::string& path);
TokenStack read_token_file(const std::string& path);

}  // namespace vg3s
