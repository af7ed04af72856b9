// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

#include "vg3s/grid.hpp"

namespace vg3s {

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
};

/// Pinhole camera, OpenCV axes (x right, y down, z forward). The pose maps
/// world to camera: p_cam = rotation * p_world + translation.
struct Camera {
  Intrinsics intrinsics;
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major
  Vec3 translation{0, 0, 0};
  std::size_t width = 64;   // pixels
  std::size_t height = 64;  // pixels

  Vec3 to_camera(const Vec3& world) const noexcept;
  Vec3 center() const noexcept;
  /// Unit world-space direction of the ray through pixel (u, v).
  Vec3 ray_direction(double u, double v) const noexcept;
};

struct PixelProjection {
  double u;
  double v;
  double depth;  // camera z
};

/// Pixel coordinates of a world point; nullopt when the point is not in front
/// of the camera (z <= near).
std::optional<PixelProjection> project(const Camera& cam, const Vec3& world, double near = 1e-3);

struct CameraRig {
  std::vector<Camera> views;

  /// Throws ConfigError on non-positive focal lengths, empty image extents or
  /// a rotation that is not orthonormal with determinant +1 (tolerance 1e-9).
  void validate() const;
};

/// Camera at `eye` looking at `target` with `up` pointing roughly upward in the image.
Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_deg, std::size_t width,
               std::size_t height);

/// `views` cameras evenly spaced in azimuth on a circle of `radius` around the
/// volume center, `height` meters above it, all looking at the center.
CameraRig ring_rig(const GridSpec& volume, std::size_t views, double radius, double height, double fov_deg,
                   std::size_t width, std::size_t height_px);

}  // namespace vg3s
