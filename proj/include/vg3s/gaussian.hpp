// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

#include "vg3s/grid.hpp"
#include "vg3s/tensor.hpp"
#include "vg3s/voxel.hpp"

namespace vg3s {

using Mat3 = std::array<double, 9>;  // row-major

/// Semantic Gaussian primitives. Opacity is stored as a logit; a = sigmoid(logit).
struct GaussianSet {
  std::size_t num_classes = 0;
  Tensor means;           // [J, 3] meters
  Tensor scales;          // [J, 3] meters, positive
  Tensor rotations;       // [J, 4] unit quaternions, w first
  Tensor opacity_logits;  // [J]
  Tensor logits;          // [J, C]

  GaussianSet() = default;
  GaussianSet(std::size_t count, std::size_t classes);

  std::size_t size() const noexcept { return opacity_logits.numel(); }
  double opacity(std::size_t i) const;
  /// Activated opacities as a [J] tensor.
  Tensor opacities() const;

  /// Throws ShapeError on inconsistent tensor shapes and NumericError on
  /// non-positive scales or non-finite values.
  void validate() const;

  bool operator==(const GaussianSet&) const = default;
};

/// Rotation matrix of a unit quaternion (w, x, y, z).
Mat3 quat_to_rot(const std::array<double, 4>& q);

/// R diag(s^2) R^T. Throws NumericError when the quaternion norm is below 1e-12.
Mat3 covariance_from(const std::array<double, 3>& s, const std::array<double, 4>& r);

/// Lattice split nx*ny*nz == count whose cells are closest to cubes.
std::array<std::size_t, 3> lattice_dims(std::size_t count, const GridSpec& volume);

struct InitConfig {
  double scale_voxels = 1.5;    // isotropic scale in voxel sizes
  double initial_opacity = 0.1;
  double jitter = 0.25;         // uniform offset bound, fraction of a lattice cell
};

/// Jittered lattice of `count` primitives over the volume with identity rotations.
GaussianSet lattice_init(std::size_t count, std::size_t num_classes, const GridSpec& volume, std::uint64_t seed,
                         const InitConfig& cfg = {});

/// Label = lowest-index argmax of the class distribution where occupancy > theta, else empty.
LabelGrid labels_from(const OccupancyGrid& grid, double theta);

/// Gaussian-set file: "VG3SGAU1", u32 J, u32 C, then per primitive f32 m[3],
/// s[3], r[4], a, c[C]. `a` is the activated opacity. Little-endian.
void write_gaussian_file(const GaussianSet& set, const std::string& path);
GaussianSet read_gaussian_file(const std::string& path);

}  // namespace vg3s
