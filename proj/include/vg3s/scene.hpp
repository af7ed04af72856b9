// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "vg3s/grid.hpp"
#include "vg3s/voxel.hpp"

namespace vg3s {

struct SceneBox {
  std::uint8_t cls = 0;
  Vec3 center{0, 0, 0};
  Vec3 extents{1, 1, 1};  // full edge lengths, meters
};

/// Toy scene made of a ground slab and axis-aligned boxes inside `volume`.
struct SyntheticScene {
  GridSpec volume;
  std::optional<double> ground_height;  // top of the ground slab; none = no ground
  std::uint8_t ground_class = 0;
  std::vector<SceneBox> boxes;  // earlier boxes win where boxes overlap

  /// Throws ConfigError when a box leaves the volume or a class is out of range.
  void validate(std::size_t num_classes) const;
};

/// The bundled desk-scale scene: ground plus one box for each other class.
SyntheticScene toy_scene(const GridSpec& volume);

/// Labels each voxel by the solid containing its center: boxes over ground
/// over empty. Solids are half-open intervals [lo, hi) per axis.
LabelGrid rasterize_scene(const SyntheticScene& scene, std::size_t num_classes);

struct RayHit {
  double depth = 0.0;  // distance along the ray, meters
  int cls = -1;        // -1 when nothing is hit
};

/// First intersection of the ray with the scene solids within (0, far].
RayHit cast_ray(const SyntheticScene& scene, const Vec3& origin, const Vec3& direction, double far);

}  // namespace vg3s
