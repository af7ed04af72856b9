// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#include "vg3s/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "vg3s/error.hpp"

namespace vg3s {
namespace {

struct Aabb {
  Vec3 lo;
  Vec3 hi;
};

Aabb box_bounds(const SceneBox& b) {
  Aabb a;
  for (int k = 0; k < 3; ++k) {
    a.lo[k] = b.center[k] - 0.5 * b.extents[k];
    a.hi[k] = b.center[k] + 0.5 * b.extents[k];
  }
  return a;
}

std::optional<Aabb> ground_bounds(const SyntheticScene& s) {
  if (!s.ground_height) return std::nullopt;
  Aabb a{s.volume.lower(), s.volume.upper()};
  a.hi[2] = std::min(a.hi[2], *s.ground_height);
  if (a.hi[2] <= a.lo[2]) return std::nullopt;
  return a;
}

bool contains(const Aabb& a, const Vec3& p) {
  for (int k = 0; k < 3; ++k) {
    if (p[k] < a.lo[k] || p[k] >= a.hi[k]) return false;
  }
  return true;
}

// Entry distance of a ray into a box, if it enters within (0, far].
std::optional<double> ray_box(const Aabb& a, const Vec3& o, const Vec3& d, double far) {
  double t0 = 0.0;
  double t1 = far;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d[k]) < 1e-15) {
      if (o[k] < a.lo[k] || o[k] > a.hi[k]) return std::nullopt;
      continue;
    }
    double ta = (a.lo[k] - o[k]) / d[k];
    double tb = (a.hi[k] - o[k]) / d[k];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  return t0;
}

// Snaps a fraction of the volume extent on axis k to a voxel boundary.
double snap(const GridSpec& v, int k, double fraction) {
  const double cells = std::round(fraction * static_cast<double>(v.dims[k]));
  return v.origin[k] + cells * v.voxel_size;
}

SceneBox box_from_fractions(const GridSpec& v, std::uint8_t cls, Vec3 lo, Vec3 hi) {
  SceneBox b;
  b.cls = cls;
  for (int k = 0; k < 3; ++k) {
    const double a = snap(v, k, lo[k]);
    const double c = snap(v, k, hi[k]);
    b.center[k] = 0.5 * (a + c);
    b.extents[k] = c - a;
  }
  return b;
}

}  // namespace

void SyntheticScene::validate(std::size_t num_classes) const {
  const Vec3 lo = volume.lower();
  const Vec3 hi = volume.upper();
  if (ground_height && ground_class >= num_classes) {
    throw ConfigError("scene ground class " + std::to_string(ground_class) + " out of range");
  }
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const SceneBox& b = boxes[i];
    if (b.cls >= num_classes) throw ConfigError("scene box " + std::to_string(i) + " has class out of range");
    const Aabb a = box_bounds(b);
    for (int k = 0; k < 3; ++k) {
      if (!(b.extents[k] > 0)) throw ConfigError("scene box " + std::to_string(i) + " has non-positive extent");
      if (a.lo[k] < lo[k] - 1e-9 || a.hi[k] > hi[k] + 1e-9) {
        throw ConfigError("scene box " + std::to_string(i) + " leaves the volume");
      }
    }
  }
}

SyntheticScene toy_scene(const GridSpec& v) {
  SyntheticScene s;
  s.volume = v;
  s.ground_class = 0;
  // ground slab two voxels thick
  s.ground_height = v.origin[2] + 2.0 * v.voxel_size;
  const double zf = 2.0 / static_cast<double>(v.dims[2]);
  s.boxes.push_back(box_from_fractions(v, 1, {0.5625, 0.1875, zf}, {0.8125, 0.3125, zf + 0.375}));
  s.boxes.push_back(box_from_fractions(v, 2, {0.125, 0.5625, zf}, {0.375, 0.8125, zf + 0.75}));
  s.boxes.push_back(box_from_fractions(v, 3, {0.625, 0.625, zf}, {0.8125, 0.8125, zf + 0.5}));
  return s;
}

LabelGrid rasterize_scene(const SyntheticScene& scene, std::size_t num_classes) {
  const GridSpec& g = scene.volume;
  LabelGrid out(g, num_classes);
  std::vector<Aabb> boxes;
  for (const SceneBox& b : scene.boxes) boxes.push_back(box_bounds(b));
  const auto ground = ground_bounds(scene);
  for (std::size_t x = 0; x < g.dims[0]; ++x) {
    for (std::size_t y = 0; y < g.dims[1]; ++y) {
      for (std::size_t z = 0; z < g.dims[2]; ++z) {
        const Vec3 c = g.center(x, y, z);
        std::uint8_t label = kEmptyLabel;
        for (std::size_t i = 0; i < boxes.size(); ++i) {
          if (contains(boxes[i], c)) {
            label = scene.boxes[i].cls;
            break;
          }
        }
        if (label == kEmptyLabel && ground && contains(*ground, c)) label = scene.ground_class;
        out.labels[g.flat(x, y, z)] = label;
      }
    }
  }
  return out;
}

RayHit cast_ray(const SyntheticScene& scene, const Vec3& origin, const Vec3& direction, double far) {
  RayHit hit;
  double best = std::numeric_limits<double>::infinity();
  for (const SceneBox& b : scene.boxes) {
    if (auto t = ray_box(box_bounds(b), origin, direction, far); t && *t < best) {
      best = *t;
      hit.cls = b.cls;
    }
  }
  if (const auto ground = ground_bounds(scene)) {
    // boxes win ties with the ground
    if (auto t = ray_box(*ground, origin, direction, far); t && *t < best) {
      best = *t;
      hit.cls = scene.ground_class;
    }
  }
  hit.depth = hit.cls >= 0 ? best : far;
  return hit;
}

}  // namespace vg3s
