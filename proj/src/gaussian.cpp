// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#include "vg3s/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "binio.hpp"
#include "vg3s/error.hpp"
#include "vg3s/rng.hpp"

namespace vg3s {
namespace {

constexpr const char* kGaussianMagic = "VG3SGAU1";

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

GaussianSet::GaussianSet(std::size_t count, std::size_t classes)
    : num_classes(classes),
      means({count, 3}),
      scales({count, 3}, 1.0),
      rotations({count, 4}),
      opacity_logits({count}),
      logits({count, classes}) {
  for (std::size_t i = 0; i < count; ++i) rotations[4 * i] = 1.0;
}

double GaussianSet::opacity(std::size_t i) const { return sigmoid(opacity_logits[i]); }

Tensor GaussianSet::opacities() const {
  Tensor a({size()});
  for (std::size_t i = 0; i < size(); ++i) a[i] = opacity(i);
  return a;
}

void GaussianSet::validate() const {
  const std::size_t J = size();
  if (opacity_logits.shape() != Shape{J} || means.shape() != Shape{J, 3} || scales.shape() != Shape{J, 3} ||
      rotations.shape() != Shape{J, 4} || logits.shape() != Shape{J, num_classes}) {
    throw ShapeError("gaussian set tensors disagree on count " + std::to_string(J));
  }
  for (const Tensor* t : {&means, &scales, &rotations, &opacity_logits, &logits}) {
    if (!t->all_finite()) throw NumericError("gaussian set contains a non-finite value");
  }
  for (double s : scales.data()) {
    if (!(s > 0)) throw NumericError("gaussian scale must be positive");
  }
}

Mat3 quat_to_rot(const std::array<double, 4>& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
          2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
          2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
}

Mat3 covariance_from(const std::array<double, 3>& s, const std::array<double, 4>& r) {
  const double n = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2] + r[3] * r[3]);
  if (n < 1e-12) throw NumericError("quaternion norm below 1e-12");
  const Mat3 R = quat_to_rot({r[0] / n, r[1] / n, r[2] / n, r[3] / n});
  Mat3 cov{};
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      double v = 0.0;
      for (int k = 0; k < 3; ++k) v += R[3 * a + k] * s[k] * s[k] * R[3 * b + k];
      cov[3 * a + b] = v;
    }
  }
  return cov;
}

std::array<std::size_t, 3> lattice_dims(std::size_t count, const GridSpec& volume) {
  if (count == 0) throw ConfigError("gaussian count must be positive");
  const Vec3 lo = volume.lower();
  const Vec3 hi = volume.upper();
  std::array<std::size_t, 3> best{count, 1, 1};
  double best_var = std::numeric_limits<double>::infinity();
  for (std::size_t nx = 1; nx <= count; ++nx) {
    if (count % nx) continue;
    for (std::size_t ny = 1; ny <= count / nx; ++ny) {
      if ((count / nx) % ny) continue;
      const std::size_t nz = count / nx / ny;
      const std::array<std::size_t, 3> n{nx, ny, nz};
      std::array<double, 3> l{};
      double mean = 0.0;
      for (int k = 0; k < 3; ++k) {
        l[k] = std::log((hi[k] - lo[k]) / static_cast<double>(n[k]));
        mean += l[k] / 3.0;
      }
      double var = 0.0;
      for (double v : l) var += (v - mean) * (v - mean);
      if (var < best_var - 1e-12) {
        best_var = var;
        best = n;
      }
    }
  }
  return best;
}

GaussianSet lattice_init(std::size_t count, std::size_t num_classes, const GridSpec& volume, std::uint64_t seed,
                         const InitConfig& cfg) {
  if (!(cfg.initial_opacity > 0 && cfg.initial_opacity < 1)) throw ConfigError("initial opacity must be in (0, 1)");
  const auto n = lattice_dims(count, volume);
  const Vec3 lo = volume.lower();
  const Vec3 hi = volume.upper();
  GaussianSet g(count, num_classes);
  Rng rng(seed);
  const double logit = std::log(cfg.initial_opacity / (1.0 - cfg.initial_opacity));
  std::size_t i = 0;
  for (std::size_t ix = 0; ix < n[0]; ++ix) {
    for (std::size_t iy = 0; iy < n[1]; ++iy) {
      for (std::size_t iz = 0; iz < n[2]; ++iz, ++i) {
        const std::array<std::size_t, 3> idx{ix, iy, iz};
        for (int k = 0; k < 3; ++k) {
          const double cell = (hi[k] - lo[k]) / static_cast<double>(n[k]);
          const double j = rng.uniform(-cfg.jitter, cfg.jitter);
          g.means[3 * i + k] = lo[k] + (static_cast<double>(idx[k]) + 0.5 + j) * cell;
          g.scales[3 * i + k] = cfg.scale_voxels * volume.voxel_size;
        }
        g.opacity_logits[i] = logit;
      }
    }
  }
  return g;
}

LabelGrid labels_from(const OccupancyGrid& grid, double theta) {
  const std::size_t V = grid.spec.count();
  const std::size_t C = grid.num_classes;
  if (grid.occupancy.size() != V || grid.semantics.size() != V * C) {
    throw ShapeError("occupancy grid payload does not match its spec");
  }
  LabelGrid out(grid.spec, C);
  for (std::size_t v = 0; v < V; ++v) {
    if (!(grid.occupancy[v] > theta) || C == 0) continue;
    std::size_t best = 0;
    for (std::size_t c = 1; c < C; ++c) {
      if (grid.semantics[v * C + c] > grid.semantics[v * C + best]) best = c;
    }
    out.labels[v] = static_cast<std::uint8_t>(best);
  }
  return out;
}

void write_gaussian_file(const GaussianSet& set, const std::string& path) {
  set.validate();
  binio::Writer w;
  w.bytes(kGaussianMagic);
  w.u32(static_cast<std::uint32_t>(set.size()));
  w.u32(static_cast<std::uint32_t>(set.num_classes));
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (int k = 0; k < 3; ++k) w.f32(static_cast<float>(set.means[3 * i + k]));
    for (int k = 0; k < 3; ++k) w.f32(static_cast<float>(set.scales[3 * i + k]));
    for (int k = 0; k < 4; ++k) w.f32(static_cast<float>(set.rotations[4 * i + k]));
    w.f32(static_cast<float>(set.opacity(i)));
    for (std::size_t c = 0; c < set.num_classes; ++c) w.f32(static_cast<float>(set.logits[i * set.num_classes + c]));
  }
  w.save(path);
}

GaussianSet read_gaussian_file(const std::string& path) {
  const std::vector<char> buf = binio::load(path);
  binio::Reader r(buf, path);
  binio::expect_magic(r, kGaussianMagic);
  const std::uint64_t J = r.u32();
  const std::uint64_t C = r.u32();
  const std::uint64_t per = (11 + C) * 4;
  std::uint64_t bytes = 0;
  if (!binio::mul_checked(J, per, bytes)) {
    throw FormatError(FormatErrorKind::kDimensionOverflow, path + ": gaussian count overflows the payload size");
  }
  if (r.remaining() < bytes) {
    throw FormatError(FormatErrorKind::kTruncated, path + ": truncated payload, expected " +
                                                       std::to_string(16 + bytes) + " bytes, found " +
                                                       std::to_string(buf.size()));
  }
  if (r.remaining() > bytes) {
    throw FormatError(FormatErrorKind::kMalformed, path + ": " + std::to_string(r.remaining() - bytes) + " trailing bytes");
  }
  GaussianSet g(J, C);
  for (std::size_t i = 0; i < J; ++i) {
    for (int k = 0; k < 3; ++k) g.means[3 * i + k] = r.f32();
    for (int k = 0; k < 3; ++k) g.scales[3 * i + k] = r.f32();
    for (int k = 0; k < 4; ++k) g.rotations[4 * i + k] = r.f32();
    // keep the logit finite for saturated opacities
    const double a = std::clamp(static_cast<double>(r.f32()), 1e-12, 1.0 - 1e-12);
    g.opacity_logits[i] = std::log(a / (1.0 - a));
    for (std::size_t c = 0; c < C; ++c) g.logits[i * C + c] = r.f32();
  }
  g.validate();
  return g;
}

}  // namespace vg3s
