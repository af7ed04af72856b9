// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#include "vg3s/camera.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "vg3s/error.hpp"

namespace vg3s {
namespace {

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Vec3 normalized(const Vec3& a) {
  const double n = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
  return {a[0] / n, a[1] / n, a[2] / n};
}

}  // namespace

Vec3 Camera::to_camera(const Vec3& p) const noexcept {
  const auto& R = rotation;
  return {R[0] * p[0] + R[1] * p[1] + R[2] * p[2] + translation[0],
          R[3] * p[0] + R[4] * p[1] + R[5] * p[2] + translation[1],
          R[6] * p[0] + R[7] * p[1] + R[8] * p[2] + translation[2]};
}

Vec3 Camera::center() const noexcept {
  const auto& R = rotation;
  const auto& t = translation;
  return {-(R[0] * t[0] + R[3] * t[1] + R[6] * t[2]), -(R[1] * t[0] + R[4] * t[1] + R[7] * t[2]),
          -(R[2] * t[0] + R[5] * t[1] + R[8] * t[2])};
}

Vec3 Camera::ray_direction(double u, double v) const noexcept {
  const Vec3 d{(u - intrinsics.cx) / intrinsics.fx, (v - intrinsics.cy) / intrinsics.fy, 1.0};
  const auto& R = rotation;
  return normalized({R[0] * d[0] + R[3] * d[1] + R[6] * d[2], R[1] * d[0] + R[4] * d[1] + R[7] * d[2],
                     R[2] * d[0] + R[5] * d[1] + R[8] * d[2]});
}

std::optional<PixelProjection> project(const Camera& cam, const Vec3& world, double near) {
  const Vec3 pc = cam.to_camera(world);
  if (pc[2] <= near) return std::nullopt;
  return PixelProjection{cam.intrinsics.fx * pc[0] / pc[2] + cam.intrinsics.cx,
                         cam.intrinsics.fy * pc[1] / pc[2] + cam.intrinsics.cy, pc[2]};
}

void CameraRig::validate() const {
  for (std::size_t i = 0; i < views.size(); ++i) {
    const Camera& c = views[i];
    const std::string tag = "camera " + std::to_string(i) + ": ";
    if (!(c.intrinsics.fx > 0) || !(c.intrinsics.fy > 0)) throw ConfigError(tag + "focal lengths must be positive");
    if (c.width == 0 || c.height == 0) throw ConfigError(tag + "image extent must be non-empty");
    const auto& R = c.rotation;
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        double dot = 0.0;
        for (int k = 0; k < 3; ++k) dot += R[3 * a + k] * R[3 * b + k];
        if (std::abs(dot - (a == b ? 1.0 : 0.0)) > 1e-9) throw ConfigError(tag + "rotation is not orthonormal");
      }
    }
    const double det = R[0] * (R[4] * R[8] - R[5] * R[7]) - R[1] * (R[3] * R[8] - R[5] * R[6]) +
                       R[2] * (R[3] * R[7] - R[4] * R[6]);
    if (std::abs(det - 1.0) > 1e-9) throw ConfigError(tag + "rotation determinant is not +1");
  }
}

Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_deg, std::size_t width,
               std::size_t height) {
  const Vec3 forward = normalized({target[0] - eye[0], target[1] - eye[1], target[2] - eye[2]});
  const Vec3 right = normalized(cross(forward, up));
  const Vec3 down = cross(forward, right);
  Camera cam;
  cam.rotation = {right[0], right[1], right[2], down[0], down[1], down[2], forward[0], forward[1], forward[2]};
  for (int r = 0; r < 3; ++r) {
    cam.translation[r] = -(cam.rotation[3 * r] * eye[0] + cam.rotation[3 * r + 1] * eye[1] +
                           cam.rotation[3 * r + 2] * eye[2]);
  }
  const double f = 0.5 * static_cast<double>(width) / std::tan(0.5 * fov_deg * std::numbers::pi / 180.0);
  cam.intrinsics = {f, f, 0.5 * static_cast<double>(width), 0.5 * static_cast<double>(height)};
  cam.width = width;
  cam.height = height;
  return cam;
}

CameraRig ring_rig(const GridSpec& volume, std::size_t views, double radius, double height, double fov_deg,
                   std::size_t width, std::size_t height_px) {
  const Vec3 lo = volume.lower();
  const Vec3 hi = volume.upper();
  const Vec3 mid{0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2])};
  CameraRig rig;
  for (std::size_t i = 0; i < views; ++i) {
    const double az = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(views);
    const Vec3 eye{mid[0] + radius * std::cos(az), mid[1] + radius * std::sin(az), mid[2] + height};
    rig.views.push_back(look_at(eye, mid, {0, 0, 1}, fov_deg, width, height_px));
  }
  return rig;
}

}  // namespace vg3s
