// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#include "vg3s/decoder.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "vg3s/error.hpp"
#include "vg3s/ops.hpp"

namespace vg3s {
namespace {

std::string key(std::size_t block, const std::string& name) {
  return "dec.b" + std::to_string(block) + "." + name;
}

constexpr std::size_t kDeltaFixed = 3 + 3 + 4 + 1;  // dm, ds_log, dr, da_logit

Var capped(Var raw, double cap) { return scale(tanh(raw), cap); }

Var parameter_embedding(const GaussianVars& g, const GridSpec& volume, const DecoderConfig& cfg) {
  const std::size_t J = g.means.shape()[0];
  Tape& tape = *g.means.tape();
  const Vec3 lo = volume.lower(), hi = volume.upper();
  Tensor gain({3}), offset({3});
  for (int a = 0; a < 3; ++a) {
    gain[a] = 2.0 / (hi[a] - lo[a]);
    offset[a] = -1.0 - lo[a] * gain[a];
  }
  const Var pn = add(mul(g.means, tape.constant(gain)), tape.constant(offset));  // [-1, 1] inside the volume
  std::vector<Var> parts{pn};
  for (std::size_t k = 0; k < cfg.fourier_bands; ++k) {
    const Var arg = scale(pn, std::numbers::pi * static_cast<double>(std::size_t{1} << k));
    parts.push_back(sin(arg));
    parts.push_back(cos(arg));
  }
  parts.push_back(scale(g.scales, 1.0 / volume.voxel_size));
  parts.push_back(g.rotations);
  parts.push_back(reshape(g.opacity_logits, {J, 1}));
  parts.push_back(g.logits);
  return concat(parts, 1);
}

}  // namespace

void DecoderConfig::validate() const {
  if (blocks < 1) throw ConfigError("decoder.blocks must be at least 1");
  if (hidden < 1) throw ConfigError("decoder.hidden must be positive");
  for (double cap : {max_shift_voxels, max_log_scale, max_rotation, max_opacity_logit, max_class_logit}) {
    if (!(cap > 0) || !std::isfinite(cap)) throw ConfigError("decoder delta caps must be positive and finite");
  }
  if (!(min_scale_voxels > 0) || !(max_scale_voxels > min_scale_voxels) || !std::isfinite(max_scale_voxels)) {
    throw ConfigError("decoder.min_scale_voxels must be positive and below decoder.max_scale_voxels");
  }
}

std::size_t parameter_embedding_dim(const DecoderConfig& cfg, std::size_t num_classes) {
  return 3 + 6 * cfg.fourier_bands + 3 + 4 + 1 + num_classes;
}

void init_decoder_params(ParamStore& store, const DecoderConfig& cfg, std::size_t feature_dim,
                         std::size_t num_classes, Rng& rng) {
  const std::size_t in = feature_dim + parameter_embedding_dim(cfg, num_classes);
  const std::size_t out = kDeltaFixed + num_classes;
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    store.add(key(b, "w1"), init_uniform({in, cfg.hidden}, in, rng));
    store.add(key(b, "b1"), Tensor({cfg.hidden}));
    store.add(key(b, "w2"), Tensor({cfg.hidden, out}));
    store.add(key(b, "b2"), Tensor({out}));
  }
}

GaussianVars GaussianVars::constant(Tape& tape, const GaussianSet& set) {
  return {tape.constant(set.means), tape.constant(set.scales), tape.constant(set.rotations),
          tape.constant(set.opacity_logits), tape.constant(set.logits)};
}

GaussianSet GaussianVars::values() const {
  GaussianSet s;
  s.num_classes = logits.shape().at(1);
  s.means = means.value();
  s.scales = scales.value();
  s.rotations = rotations.value();
  s.opacity_logits = opacity_logits.value();
  s.logits = logits.value();
  return s;
}

PointProjection project_points(Var means, const Camera& cam, double near) {
  Tape& tape = *means.tape();
  const Tensor& m = means.value();
  if (m.rank() != 2 || m.dim(1) != 3) throw ShapeError("project_points expects [J, 3], got " + shape_str(m.shape()));
  const std::size_t J = m.dim(0);
  const double W = static_cast<double>(cam.width), H = static_cast<double>(cam.height);
  const auto& R = cam.rotation;
  const Intrinsics& K = cam.intrinsics;
  PointProjection out;
  out.visible.assign(J, false);
  Tensor uv({J, 2}, 0.5);
  std::vector<double> jac(J * 6, 0.0);  // d(u/W)/dm and d(v/H)/dm per point
  for (std::size_t j = 0; j < J; ++j) {
    const Vec3 c = cam.to_camera({m[3 * j], m[3 * j + 1], m[3 * j + 2]});
    if (!(c[2] > near)) continue;
    const double u = K.fx * c[0] / c[2] + K.cx;
    const double v = K.fy * c[1] / c[2] + K.cy;
    if (u < 0 || u > W || v < 0 || v > H) continue;
    out.visible[j] = true;
    uv[2 * j] = u / W;
    uv[2 * j + 1] = v / H;
    const double iz = 1.0 / c[2];
    for (int a = 0; a < 3; ++a) {
      jac[6 * j + a] = K.fx * (R[a] - c[0] * iz * R[6 + a]) * iz / W;
      jac[6 * j + 3 + a] = K.fy * (R[3 + a] - c[1] * iz * R[6 + a]) * iz / H;
    }
  }
  out.uv = tape.record("project_points", std::move(uv), {means}, [&tape, means, jac, J](const Tensor& g, const Tensor&) {
    Tensor* gm = tape.grad_slot(means);
    for (std::size_t j = 0; j < J; ++j) {
      for (int a = 0; a < 3; ++a) {
        (*gm)[3 * j + a] += g[2 * j] * jac[6 * j + a] + g[2 * j + 1] * jac[6 * j + 3 + a];
      }
    }
  });
  return out;
}

Var pooled_features(Var means, const std::vector<FeaturePyramid>& pyramids, const CameraRig& rig) {
  if (pyramids.size() != rig.views.size()) {
    throw ShapeError("decoder: " + std::to_string(pyramids.size()) + " feature pyramids for " +
                     std::to_string(rig.views.size()) + " cameras");
  }
  if (pyramids.empty() || pyramids[0].levels.empty()) throw ShapeError("decoder: no feature levels");
  Tape& tape = *means.tape();
  const std::size_t J = means.shape().at(0);
  const std::size_t levels = pyramids[0].levels.size();
  const std::size_t D = pyramids[0].levels[0].shape().at(2);

  std::vector<PointProjection> proj;
  std::vector<std::size_t> seen(J, 0);
  for (std::size_t v = 0; v < rig.views.size(); ++v) {
    if (pyramids[v].levels.size() != levels) throw ShapeError("decoder: views disagree on the pyramid depth");
    proj.push_back(project_points(means, rig.views[v]));
    for (std::size_t j = 0; j < J; ++j) seen[j] += proj.back().visible[j];
  }
  Var total = tape.constant(Tensor({J, D}));
  for (std::size_t v = 0; v < rig.views.size(); ++v) {
    Tensor weight({J, 1});
    for (std::size_t j = 0; j < J; ++j) {
      if (proj[v].visible[j]) weight[j] = 1.0 / static_cast<double>(seen[j] * levels);
    }
    Var acc = bilinear_sample(pyramids[v].levels[0], proj[v].uv);
    for (std::size_t l = 1; l < levels; ++l) acc = add(acc, bilinear_sample(pyramids[v].levels[l], proj[v].uv));
    total = add(total, mul(acc, tape.constant(weight)));
  }
  return total;
}

GaussianVars decode_gaussians(const Bound& p, const std::vector<FeaturePyramid>& pyramids, const CameraRig& rig,
                              const GaussianSet& init, const GridSpec& volume, const DecoderConfig& cfg) {
  cfg.validate();
  init.validate();
  Tape& tape = p.tape();
  const std::size_t J = init.size();
  const std::size_t C = init.num_classes;
  const double vs = volume.voxel_size;
  const Vec3 lo = volume.lower(), hi = volume.upper();
  const Tensor lo_t = Tensor::from({lo[0], lo[1], lo[2]}), hi_t = Tensor::from({hi[0], hi[1], hi[2]});
  const Tensor s_lo({3}, cfg.min_scale_voxels * vs), s_hi({3}, cfg.max_scale_voxels * vs);

  for (std::size_t j = 0; j < J; ++j) {
    for (int a = 0; a < 3; ++a) {
      const double x = init.means[3 * j + a];
      if (x < lo[a] || x > hi[a]) {
        throw ConfigError("decoder: initial Gaussian " + std::to_string(j) + " lies outside the volume");
      }
    }
  }
  GaussianVars g = GaussianVars::constant(tape, init);
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    const Var feat = pooled_features(g.means, pyramids, rig);
    const Var x = concat({feat, parameter_embedding(g, volume, cfg)}, 1);
    const Var h = gelu(linear(x, p[key(b, "w1")], p[key(b, "b1")]));
    const Var d = linear(h, p[key(b, "w2")], p[key(b, "b2")]);  // [J, 11 + C]

    g.means = clamp(add(g.means, capped(slice(d, 1, 0, 3), cfg.max_shift_voxels * vs)), lo_t, hi_t);
    g.scales = clamp(mul(g.scales, exp(capped(slice(d, 1, 3, 6), cfg.max_log_scale))), s_lo, s_hi);
    g.rotations = normalize_rows(add(g.rotations, capped(slice(d, 1, 6, 10), cfg.max_rotation)));
    g.opacity_logits = add(g.opacity_logits, reshape(capped(slice(d, 1, 10, 11), cfg.max_opacity_logit), {J}));
    g.logits = add(g.logits, capped(slice(d, 1, kDeltaFixed, kDeltaFixed + C), cfg.max_class_logit));
  }
  return g;
}

}  // namespace vg3s
