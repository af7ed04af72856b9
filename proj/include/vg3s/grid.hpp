// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>

namespace vg3s {

using Vec3 = std::array<double, 3>;

/// Axis-aligned voxel volume. Voxel (x, y, z) has its center at
/// origin + (index + 0.5) * voxel_size and flat index (x * Y + y) * Z + z.
struct GridSpec {
  std::array<std::size_t, 3> dims{32, 32, 8};
  Vec3 origin{-8.0, -8.0, -2.0};
  double voxel_size = 0.5;

  std::size_t count() const noexcept { return dims[0] * dims[1] * dims[2]; }
  std::size_t flat(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return (x * dims[1] + y) * dims[2] + z;
  }
  Vec3 center(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return {origin[0] + (static_cast<double>(x) + 0.5) * voxel_size,
            origin[1] + (static_cast<double>(y) + 0.5) * voxel_size,
            origin[2] + (static_cast<double>(z) + 0.5) * voxel_size};
  }
  Vec3 lower() const noexcept { return origin; }
  Vec3 upper() const noexcept {
    return {origin[0] + static_cast<double>(dims[0]) * voxel_size,
            origin[1] + static_cast<double>(dims[1]) * voxel_size,
            origin[2] + static_cast<double>(dims[2]) * voxel_size};
  }

  bool operator==(const GridSpec&) const = default;
};

}  // namespace vg3s
