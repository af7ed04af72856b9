// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#include "vg3s/hgfa.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vg3s/error.hpp"
#include "vg3s/ops.hpp"

namespace vg3s {
namespace {

std::string key(std::size_t group, const std::string& name) {
  return "hgfa.g" + std::to_string(group) + "." + name;
}

/// Exponent e with tau == 2^e, or throws.
int dyadic_exponent(double tau) {
  if (!(tau > 0) || !std::isfinite(tau)) throw ConfigError("hgfa.scale_factors must be positive");
  const double e = std::log2(tau);
  if (std::abs(e - std::round(e)) > 1e-12) {
    throw ConfigError("hgfa.scale_factors entry " + std::to_string(tau) + " is not a power of two");
  }
  return static_cast<int>(std::round(e));
}

std::size_t scaled(std::size_t n, int e) { return e >= 0 ? n << e : n >> (-e); }

}  // namespace

void HgfaConfig::validate(std::size_t layers, std::size_t channels, std::size_t patch_h, std::size_t patch_w) const {
  if (groups == 0 || layers_per_group == 0) throw ConfigError("hgfa.groups and hgfa.layers_per_group must be positive");
  if (groups * layers_per_group != layers) {
    throw ConfigError("N must equal K·M: tokens.layers = " + std::to_string(layers) + " but hgfa.groups = " +
                      std::to_string(groups) + " and hgfa.layers_per_group = " + std::to_string(layers_per_group));
  }
  if (expansion_ratios.size() != groups || pyramid_dims.size() != groups || scale_factors.size() != groups) {
    throw ConfigError("hgfa.expansion_ratios, hgfa.pyramid_dims and hgfa.scale_factors need hgfa.groups = " +
                      std::to_string(groups) + " entries each");
  }
  if (target_dim == 0) throw ConfigError("hgfa.target_dim must be positive");
  if (se_reduction == 0) throw ConfigError("hgfa.se_reduction must be positive");
  if (!(dropout >= 0 && dropout < 1)) throw ConfigError("hgfa.dropout must be in [0, 1)");
  if (channels == 0 || patch_h == 0 || patch_w == 0) throw ConfigError("token extents must be positive");
  for (std::size_t k = 0; k < groups; ++k) {
    if (hidden_dim(k, channels) < 1) {
      throw ConfigError("hgfa.expansion_ratios entry " + std::to_string(k) + " gives an empty hidden layer");
    }
    if (pyramid_dims[k] == 0) throw ConfigError("hgfa.pyramid_dims entries must be positive");
    const int e = dyadic_exponent(scale_factors[k]);
    if (e < 0) {
      const std::size_t div = std::size_t{1} << (-e);
      if (patch_h % div || patch_w % div) {
        throw ConfigError("hgfa.scale_factors entry " + std::to_string(scale_factors[k]) +
                          " gives a non-integral extent for patch grid " + std::to_string(patch_h) + "x" +
                          std::to_string(patch_w));
      }
    }
  }
}

std::size_t HgfaConfig::hidden_dim(std::size_t group, std::size_t channels) const {
  const double h = std::floor(expansion_ratios.at(group) * static_cast<double>(channels));
  return h < 1 ? 0 : static_cast<std::size_t>(h);
}

std::pair<std::size_t, std::size_t> HgfaConfig::level_extent(std::size_t group, std::size_t h, std::size_t w) const {
  const int e = dyadic_exponent(scale_factors.at(group));
  return {scaled(h, e), scaled(w, e)};
}

std::size_t HgfaConfig::flattened_tokens(std::size_t h, std::size_t w) const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < groups; ++k) {
    const auto [a, b] = level_extent(k, h, w);
    n += a * b;
  }
  return n;
}

void init_hgfa_params(ParamStore& store, const HgfaConfig& cfg, std::size_t C, Rng& rng) {
  const std::size_t score_hidden = std::max<std::size_t>(1, C / 4);
  const std::size_t se_hidden = std::max<std::size_t>(1, C / cfg.se_reduction);
  for (std::size_t k = 0; k < cfg.groups; ++k) {
    store.add(key(k, "gatf.w1"), init_uniform({C, score_hidden}, C, rng));
    store.add(key(k, "gatf.b1"), Tensor({score_hidden}));
    store.add(key(k, "gatf.w2"), Tensor({score_hidden, 1}));
    store.add(key(k, "gatf.b2"), Tensor({1}));
    store.add(key(k, "gatf.ln_gain"), Tensor({C}, 1.0));
    store.add(key(k, "gatf.ln_bias"), Tensor({C}));

    const std::size_t H = cfg.hidden_dim(k, C);
    store.add(key(k, "tatr.w1"), init_uniform({C, H}, C, rng));
    store.add(key(k, "tatr.b1"), Tensor({H}));
    store.add(key(k, "tatr.w2"), Tensor({H, C}));
    store.add(key(k, "tatr.b2"), Tensor({C}));

    store.add(key(k, "lsfp.dw"), init_uniform({3, 3, C}, 9, rng));
    store.add(key(k, "lsfp.dw_b"), Tensor({C}));
    store.add(key(k, "lsfp.se_w1"), init_uniform({C, se_hidden}, C, rng));
    store.add(key(k, "lsfp.se_b1"), Tensor({se_hidden}));
    store.add(key(k, "lsfp.se_w2"), init_uniform({se_hidden, C}, se_hidden, rng));
    store.add(key(k, "lsfp.se_b2"), Tensor({C}));
    store.add(key(k, "lsfp.pw"), Tensor({C, C}));
    store.add(key(k, "lsfp.pw_b"), Tensor({C}));

    const std::size_t DH = cfg.pyramid_dims[k];
    store.add(key(k, "pyr.in"), init_uniform({C, DH}, C, rng));
    store.add(key(k, "pyr.in_b"), Tensor({DH}));
    const int e = dyadic_exponent(cfg.scale_factors[k]);
    if (e > 0) {
      const std::size_t t = std::size_t{1} << e;
      store.add(key(k, "pyr.up"), init_uniform({t, t, DH, DH}, DH, rng));
      store.add(key(k, "pyr.up_b"), Tensor({DH}));
    }
    for (int i = 0; i < -e; ++i) {
      store.add(key(k, "pyr.down" + std::to_string(i)), init_uniform({3, 3, DH, DH}, 9 * DH, rng));
      store.add(key(k, "pyr.down" + std::to_string(i) + "_b"), Tensor({DH}));
    }
    store.add(key(k, "pyr.out"), init_uniform({DH, cfg.target_dim}, DH, rng));
    store.add(key(k, "pyr.out_b"), Tensor({cfg.target_dim}));
  }
}

std::vector<std::vector<std::size_t>> partition_groups(std::size_t layers, const HgfaConfig& cfg) {
  if (cfg.groups == 0 || layers % cfg.groups != 0) {
    throw ConfigError("N must equal K·M: tokens.layers = " + std::to_string(layers) +
                      " is not a multiple of hgfa.groups = " + std::to_string(cfg.groups));
  }
  const std::size_t M = layers / cfg.groups;
  std::vector<std::vector<std::size_t>> out(cfg.groups);
  for (std::size_t k = 0; k < cfg.groups; ++k) {
    for (std::size_t m = 0; m < M; ++m) out[k].push_back(k * M + m);
  }
  return out;
}

GatfResult gatf_fuse(const Bound& p, std::size_t k, const std::vector<Var>& layers) {
  if (layers.empty()) throw ShapeError("gatf: empty group");
  const Shape& s = layers[0].shape();
  if (s.size() != 2) throw ShapeError("gatf: layer tokens must be [L, D], got " + shape_str(s));
  const std::size_t M = layers.size();
  const std::size_t L = s[0];
  const std::size_t C = s[1];
  std::vector<Var> parts;
  for (const Var& l : layers) {
    if (l.shape() != s) throw ShapeError("gatf: layers in a group differ in shape");
    parts.push_back(reshape(l, {1, L, C}));
  }
  const Var g = M == 1 ? parts[0] : concat(parts, 0);  // [M, L, C]
  const Var hidden = gelu(linear(g, p[key(k, "gatf.w1")], p[key(k, "gatf.b1")]));
  const Var logits = reshape(linear(hidden, p[key(k, "gatf.w2")], p[key(k, "gatf.b2")]), {M, L});
  const Var w = softmax(logits, 0);
  const Var mixed = sum_axis(mul(g, reshape(w, {M, L, 1})), 0);
  return {layer_norm(mixed, p[key(k, "gatf.ln_gain")], p[key(k, "gatf.ln_bias")]), w};
}

Var tatr_refine(const Bound& p, std::size_t k, Var x, const HgfaConfig& cfg, bool training, std::uint64_t seed,
                std::uint64_t step) {
  Var h = gelu(linear(x, p[key(k, "tatr.w1")], p[key(k, "tatr.b1")]));
  h = dropout(h, cfg.dropout, seed, k, step, training);
  return add(x, linear(h, p[key(k, "tatr.w2")], p[key(k, "tatr.b2")]));
}

Var lsfp_spatial_block(const Bound& p, std::size_t k, Var x, std::size_t h, std::size_t w, const HgfaConfig& cfg) {
  const Shape& s = x.shape();
  if (s.size() != 2 || s[0] != h * w) {
    throw ShapeError("lsfp: " + shape_str(s) + " tokens do not fill a " + std::to_string(h) + "x" +
                     std::to_string(w) + " patch grid");
  }
  const std::size_t C = s[1];
  const Var f = reshape(x, {h, w, C});
  Var y = add(conv2d(f, p[key(k, "lsfp.dw")], ConvMode::kDepthwise, 1, 1), p[key(k, "lsfp.dw_b")]);
  if (!cfg.se_bypass) {
    const Var pooled = reshape(global_avg_pool(y), {1, C});
    const Var z = relu(linear(pooled, p[key(k, "lsfp.se_w1")], p[key(k, "lsfp.se_b1")]));
    const Var gate = sigmoid(linear(z, p[key(k, "lsfp.se_w2")], p[key(k, "lsfp.se_b2")]));
    y = mul(y, reshape(gate, {C}));
  }
  const Var r = add(conv2d(y, p[key(k, "lsfp.pw")], ConvMode::kPointwise), p[key(k, "lsfp.pw_b")]);
  return add(f, r);
}

Tensor sinusoidal_embedding(std::size_t h, std::size_t w, std::size_t channels) {
  Tensor pe({h, w, channels});
  const std::size_t rows = channels / 2;
  const std::size_t cols = channels - rows;
  auto value = [](double pos, std::size_t c, std::size_t width) {
    const double i = static_cast<double>(c / 2);
    const double freq = std::pow(10000.0, -2.0 * i / static_cast<double>(width));
    return c % 2 == 0 ? std::sin(pos * freq) : std::cos(pos * freq);
  };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double* out = &pe[(y * w + x) * channels];
      for (std::size_t c = 0; c < rows; ++c) out[c] = value(static_cast<double>(y), c, rows);
      for (std::size_t c = 0; c < cols; ++c) out[rows + c] = value(static_cast<double>(x), c, cols);
    }
  }
  return pe;
}

Var FeaturePyramid::flattened() const {
  std::vector<Var> parts;
  for (const Var& l : levels) {
    const Shape& s = l.shape();
    parts.push_back(reshape(l, {s[0] * s[1], s[2]}));
  }
  return parts.size() == 1 ? parts[0] : concat(parts, 0);
}

FeaturePyramid lsfp_pyramid(const Bound& p, const std::vector<Var>& spatial, const HgfaConfig& cfg) {
  if (spatial.size() != cfg.groups) throw ShapeError("lsfp: expected one spatial map per group");
  Tape& tape = p.tape();
  FeaturePyramid out;
  for (std::size_t k = 0; k < cfg.groups; ++k) {
    const Shape& s = spatial[k].shape();
    const std::size_t DH = cfg.pyramid_dims[k];
    Var f = add(conv2d(spatial[k], p[key(k, "pyr.in")], ConvMode::kPointwise), p[key(k, "pyr.in_b")]);
    f = add(f, tape.constant(sinusoidal_embedding(s[0], s[1], DH)));
    const int e = dyadic_exponent(cfg.scale_factors[k]);
    if (e > 0) {
      const std::size_t t = std::size_t{1} << e;
      f = add(conv2d(f, p[key(k, "pyr.up")], ConvMode::kTransposed, t, 0), p[key(k, "pyr.up_b")]);
    }
    for (int i = 0; i < -e; ++i) {
      const std::string d = "pyr.down" + std::to_string(i);
      f = add(conv2d(f, p[key(k, d)], ConvMode::kStrided, 2, 1), p[key(k, d + "_b")]);
    }
    out.levels.push_back(add(conv2d(f, p[key(k, "pyr.out")], ConvMode::kPointwise), p[key(k, "pyr.out_b")]));
  }
  return out;
}

FeaturePyramid hgfa_view(const Bound& p, const std::vector<Var>& layers, std::size_t h, std::size_t w,
                         const HgfaConfig& cfg, bool training, std::uint64_t seed, std::uint64_t step) {
  const auto groups = partition_groups(layers.size(), cfg);
  std::vector<Var> spatial;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    std::vector<Var> members;
    for (std::size_t j : groups[k]) members.push_back(layers[j]);
    const Var fused = gatf_fuse(p, k, members).fused;
    const Var refined = tatr_refine(p, k, fused, cfg, training, seed, step);
    spatial.push_back(lsfp_spatial_block(p, k, refined, h, w, cfg));
  }
  return lsfp_pyramid(p, spatial, cfg);
}

std::vector<FeaturePyramid> hgfa_forward(const Bound& p, const TokenStack& stack, const HgfaConfig& cfg,
                                         bool training, std::uint64_t seed, std::uint64_t step) {
  cfg.validate(stack.layers, stack.channels, stack.patch_h, stack.patch_w);
  std::vector<FeaturePyramid> out;
  for (std::size_t v = 0; v < stack.views; ++v) {
    std::vector<Var> layers;
    for (std::size_t j = 0; j < stack.layers; ++j) layers.push_back(p.tape().constant(stack.layer(v, j)));
    // shared parameters; a per-view seed keeps dropout masks independent
    out.push_back(hgfa_view(p, layers, stack.patch_h, stack.patch_w, cfg, training, seed + v, step));
  }
  return out;
}

}  // namespace vg3s
