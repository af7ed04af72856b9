// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vg3s/grid.hpp"

namespace vg3s {

inline constexpr std::uint8_t kEmptyLabel = 255;

/// Dense semantic labels, one byte per voxel in GridSpec flat order; classes are
/// 0..num_classes-1 and kEmptyLabel marks empty space.
struct LabelGrid {
  GridSpec spec;
  std::size_t num_classes = 0;
  std::vector<std::uint8_t> labels;

  LabelGrid() = default;
  LabelGrid(GridSpec s, std::size_t classes) : spec(s), num_classes(classes), labels(s.count(), kEmptyLabel) {}

  bool operator==(const LabelGrid&) const = default;
};

/// Per-voxel occupancy probability and class distribution (row-major [V, C]).
/// The distribution is meaningful only where weight_sum > 0.
struct OccupancyGrid {
  GridSpec spec;
  std::size_t num_classes = 0;
  std::vector<double> occupancy;
  std::vector<double> semantics;
  std::vector<double> weight_sum;  // sum of contributions per voxel
};

/// Voxel-grid file: "VG3SVOX1", u32 X, Y, Z, u32 class count, f32 origin[3],
/// f32 voxel size, then X*Y*Z label bytes (255 = empty). Little-endian.
void write_voxel_file(const LabelGrid& grid, const std::string& path);
LabelGrid read_voxel_file(const std::string& path);

/// ASCII PLY point cloud of occupied voxel centers with per-vertex class colors.
void write_ply(const LabelGrid& grid, const std::string& path);

/// Fixed RGB palette entry for a class index.
std::array<std::uint8_t, 3> class_color(std::size_t cls);

}  // namespace vg3s
