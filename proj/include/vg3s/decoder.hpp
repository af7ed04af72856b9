// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "vg3s/autodiff.hpp"
#include "vg3s/camera.hpp"
#include "vg3s/gaussian.hpp"
#include "vg3s/grid.hpp"
#include "vg3s/hgfa.hpp"
#include "vg3s/params.hpp"

namespace vg3s {

struct DecoderConfig {
  std::size_t blocks = 2;
  std::size_t hidden = 64;          // head MLP width
  std::size_t fourier_bands = 4;    // sin/cos bands of the position embedding
  double max_shift_voxels = 1.0;    // |dm| per block, in voxel sizes
  double max_log_scale = 0.5;       // |ds_log| per block
  double max_rotation = 0.25;       // |dr| per quaternion component per block
  double max_opacity_logit = 3.0;   // |da_logit| per block
  double max_class_logit = 3.0;     // |dc| per block
  double min_scale_voxels = 0.1;
  double max_scale_voxels = 8.0;

  /// Throws ConfigError on zero blocks, zero width, non-positive caps or a bad scale range.
  void validate() const;
};

/// Width of the per-Gaussian parameter embedding.
std::size_t parameter_embedding_dim(const DecoderConfig& cfg, std::size_t num_classes);

/// Registers "dec.b{i}." head parameters; every output layer starts at zero.
void init_decoder_params(ParamStore& store, const DecoderConfig& cfg, std::size_t feature_dim,
                         std::size_t num_classes, Rng& rng);

/// Gaussian parameters as tape values.
struct GaussianVars {
  Var means;           // [J, 3]
  Var scales;          // [J, 3]
  Var rotations;       // [J, 4]
  Var opacity_logits;  // [J]
  Var logits;          // [J, C]

  static GaussianVars constant(Tape& tape, const GaussianSet& set);
  GaussianSet values() const;
};

struct PointProjection {
  Var uv;                     // [J, 2] in [0, 1] image-normalized coordinates
  std::vector<bool> visible;  // in front of the camera and inside the image
};

/// Differentiable pinhole projection of [J, 3] world points. Hidden points get
/// uv = (0.5, 0.5) and no gradient.
PointProjection project_points(Var means, const Camera& cam, double near = 1e-3);

/// Mean of the bilinear samples over every (visible view, level) pair; zero
/// for a point no camera sees. Returns [J, D].
Var pooled_features(Var means, const std::vector<FeaturePyramid>& pyramids, const CameraRig& rig);

/// Refines `init` over cfg.blocks blocks of sample, embed, predict deltas, apply.
GaussianVars decode_gaussians(const Bound& p, const std::vector<FeaturePyramid>& pyramids, const CameraRig& rig,
                              const GaussianSet& init, const GridSpec& volume, const DecoderConfig& cfg);

}  // namespace vg3s
