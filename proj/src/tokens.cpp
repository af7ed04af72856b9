// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#include "vg3s/tokens.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "binio.hpp"
#include "vg3s/error.hpp"
#include "vg3s/rng.hpp"

namespace vg3s {
namespace {

constexpr const char* kTokenMagic = "VG3STOK1";
constexpr std::size_t kHeaderBytes = 8 + 7 * 4;

std::size_t dtype_bytes(TokenDtype t) { return t == TokenDtype::kFloat32 ? 4 : 8; }

}  // namespace

TokenStack::TokenStack(std::size_t s, std::size_t n, std::size_t h, std::size_t w, std::size_t d, TokenDtype type)
    : views(s), layers(n), patch_h(h), patch_w(w), channels(d), dtype(type), data(s * n * h * w * d, 0.0) {}

Tensor TokenStack::layer(std::size_t view, std::size_t layer) const {
  const std::size_t L = tokens_per_view();
  const auto first = data.begin() + static_cast<std::ptrdiff_t>(index(view, layer, 0, 0));
  return Tensor({L, channels}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(L * channels)));
}

void TokenStack::validate(std::size_t groups) const {
  if (data.size() != views * layers * tokens_per_view() * channels) {
    throw ShapeError("token stack holds " + std::to_string(data.size()) + " values, header implies " +
                     std::to_string(views * layers * tokens_per_view() * channels));
  }
  if (groups == 0 || layers % groups != 0) {
    throw ConfigError("token layer count " + std::to_string(layers) + " is not a multiple of group count " +
                      std::to_string(groups));
  }
  for (double x : data) {
    if (!std::isfinite(x)) throw NumericError("token stack contains a non-finite value");
  }
}

Tensor encode_patches(const SyntheticScene& scene, const Camera& cam, const TokenConfig& cfg) {
  if (cfg.patch_h == 0 || cfg.patch_w == 0 || cam.height % cfg.patch_h != 0 || cam.width % cfg.patch_w != 0) {
    throw ConfigError("patch grid " + std::to_string(cfg.patch_h) + "x" + std::to_string(cfg.patch_w) +
                      " does not tile image " + std::to_string(cam.height) + "x" + std::to_string(cam.width));
  }
  if (cfg.rays_per_side == 0) throw ConfigError("tokens.rays_per_side must be positive");
  const std::size_t C = cfg.num_classes;
  const std::size_t r = cfg.rays_per_side;
  const double ph = static_cast<double>(cam.height / cfg.patch_h);
  const double pw = static_cast<double>(cam.width / cfg.patch_w);
  const Vec3 origin = cam.center();
  Tensor enc({cfg.patch_h * cfg.patch_w, C + 2});
  std::vector<std::size_t> votes(C + 1);
  for (std::size_t py = 0; py < cfg.patch_h; ++py) {
    for (std::size_t px = 0; px < cfg.patch_w; ++px) {
      std::fill(votes.begin(), votes.end(), 0);
      double depth = 0.0;
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t k = 0; k < r; ++k) {
          const double v = (static_cast<double>(py) + (static_cast<double>(i) + 0.5) / static_cast<double>(r)) * ph;
          const double u = (static_cast<double>(px) + (static_cast<double>(k) + 0.5) / static_cast<double>(r)) * pw;
          const RayHit hit = cast_ray(scene, origin, cam.ray_direction(u, v), cfg.far);
          depth += hit.depth;
          ++votes[hit.cls >= 0 ? static_cast<std::size_t>(hit.cls) : C];
        }
      }
      std::size_t best = 0;
      for (std::size_t c = 1; c <= C; ++c) {
        if (votes[c] > votes[best]) best = c;
      }
      const std::size_t l = py * cfg.patch_w + px;
      enc[l * (C + 2)] = depth / static_cast<double>(r * r);
      enc[l * (C + 2) + 1 + best] = 1.0;
    }
  }
  return enc;
}

TokenStack generate_synthetic_tokens(const SyntheticScene& scene, const CameraRig& rig, const TokenConfig& cfg,
                                     std::uint64_t seed) {
  rig.validate();
  scene.validate(cfg.num_classes);
  if (rig.views.empty()) throw ConfigError("camera rig has no views");
  if (cfg.groups == 0 || cfg.layers % cfg.groups != 0) {
    throw ConfigError("tokens.layers (" + std::to_string(cfg.layers) + ") must be a multiple of hgfa.groups (" +
                      std::to_string(cfg.groups) + ")");
  }
  if (!(cfg.far > 0)) throw ConfigError("tokens.far must be positive");
  const std::size_t S = rig.views.size();
  const std::size_t L = cfg.patch_h * cfg.patch_w;
  const std::size_t E = cfg.num_classes + 2;
  const std::size_t D = cfg.channels;

  std::vector<Tensor> enc;
  for (const Camera& cam : rig.views) {
    Tensor e = encode_patches(scene, cam, cfg);
    for (std::size_t l = 0; l < L; ++l) e[l * E] /= cfg.far;
    enc.push_back(std::move(e));
  }

  Rng rng(seed);
  const double gain = 1.0 / std::sqrt(static_cast<double>(E));
  std::vector<double> base(E * D);
  for (double& b : base) b = gain * rng.normal();
  std::vector<std::vector<double>> proj(cfg.layers, std::vector<double>(E * D));
  for (auto& p : proj) {
    for (std::size_t i = 0; i < E * D; ++i) p[i] = base[i] + cfg.layer_variation * gain * rng.normal();
  }

  TokenStack out(S, cfg.layers, cfg.patch_h, cfg.patch_w, D, cfg.dtype);
  for (std::size_t v = 0; v < S; ++v) {
    for (std::size_t j = 0; j < cfg.layers; ++j) {
      for (std::size_t l = 0; l < L; ++l) {
        for (std::size_t c = 0; c < D; ++c) {
          double x = 0.0;
          for (std::size_t e = 0; e < E; ++e) x += enc[v][l * E + e] * proj[j][e * D + c];
          x += cfg.noise * rng.normal();
          if (cfg.dtype == TokenDtype::kFloat32) x = static_cast<double>(static_cast<float>(x));
          out.at(v, j, l, c) = x;
        }
      }
    }
  }
  return out;
}

void write_token_file(const TokenStack& stack, const std::string& path) {
  stack.validate(1);
  constexpr std::size_t kMax = 0xffffffffu;
  for (std::size_t d : {stack.views, stack.layers, stack.tokens_per_view(), stack.channels, stack.patch_h,
                        stack.patch_w}) {
    if (d > kMax) throw FormatError(FormatErrorKind::kDimensionOverflow, "token dimension exceeds u32 range");
  }
  binio::Writer w;
  w.bytes(kTokenMagic);
  w.u32(static_cast<std::uint32_t>(stack.views));
  w.u32(static_cast<std::uint32_t>(stack.layers));
  w.u32(static_cast<std::uint32_t>(stack.tokens_per_view()));
  w.u32(static_cast<std::uint32_t>(stack.channels));
  w.u32(static_cast<std::uint32_t>(stack.patch_h));
  w.u32(static_cast<std::uint32_t>(stack.patch_w));
  w.u32(static_cast<std::uint32_t>(stack.dtype));
  for (double x : stack.data) {
    if (stack.dtype == TokenDtype::kFloat32) {
      w.f32(static_cast<float>(x));
    } else {
      w.f64(x);
    }
  }
  w.save(path);
}

TokenStack read_token_file(const std::string& path) {
  const std::vector<char> buf = binio::load(path);
  binio::Reader r(buf, path);
  binio::expect_magic(r, kTokenMagic);
  const std::uint64_t S = r.u32();
  const std::uint64_t N = r.u32();
  const std::uint64_t L = r.u32();
  const std::uint64_t D = r.u32();
  const std::uint64_t h = r.u32();
  const std::uint64_t w = r.u32();
  const std::uint32_t tag = r.u32();
  if (tag != 1 && tag != 2) {
    throw FormatError(FormatErrorKind::kMalformed, path + ": unknown dtype tag " + std::to_string(tag));
  }
  const auto dtype = static_cast<TokenDtype>(tag);
  if (h * w != L) {
    throw FormatError(FormatErrorKind::kMalformed, path + ": token count " + std::to_string(L) +
                                                       " does not equal patch grid " + std::to_string(h) + "x" +
                                                       std::to_string(w));
  }
  std::uint64_t count = 1;
  std::uint64_t bytes = 0;
  bool ok = binio::mul_checked(S, N, count) && binio::mul_checked(count, L, count) &&
            binio::mul_checked(count, D, count) && binio::mul_checked(count, dtype_bytes(dtype), bytes);
  // payload must also be addressable as one buffer
  ok = ok && bytes <= (std::uint64_t{1} << 48);
  if (!ok) {
    throw FormatError(FormatErrorKind::kDimensionOverflow,
                      path + ": header dimensions " + std::to_string(S) + "x" + std::to_string(N) + "x" +
                          std::to_string(L) + "x" + std::to_string(D) + " overflow the payload size");
  }
  const std::uint64_t expected = kHeaderBytes + bytes;
  if (buf.size() < expected) {
    throw FormatError(FormatErrorKind::kTruncated, path + ": truncated payload, expected " +
                                                       std::to_string(expected) + " bytes, found " +
                                                       std::to_string(buf.size()));
  }
  if (buf.size() > expected) {
    throw FormatError(FormatErrorKind::kMalformed, path + ": " + std::to_string(buf.size() - expected) +
                                                       " trailing bytes after payload");
  }
  TokenStack out(S, N, h, w, D, dtype);
  for (double& x : out.data) x = dtype == TokenDtype::kFloat32 ? static_cast<double>(r.f32()) : r.f64();
  return out;
}

}  // namespace vg3s
