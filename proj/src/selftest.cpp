// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#include "vg3s/selftest.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <map>
#include <sstream>

#include "vg3s/config.hpp"
#include "vg3s/decoder.hpp"
#include "vg3s/gradcheck.hpp"
#include "vg3s/hgfa.hpp"
#include "vg3s/losses.hpp"
#include "vg3s/metrics.hpp"
#include "vg3s/ops.hpp"
#include "vg3s/pipeline.hpp"
#include "vg3s/rng.hpp"
#include "vg3s/splat.hpp"
#include "vg3s/train.hpp"

namespace vg3s {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

Tensor randn(Shape shape, Rng& rng, double sd = 1.0) {
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = sd * rng.normal();
  return t;
}

Tensor uniform(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = rng.uniform(lo, hi);
  return t;
}

bool same_bytes(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0;
}

bool same_bytes(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

/// Runs `body`, turning any exception into a failed result.
CheckResult guarded(int criterion, const std::string& name, const std::function<void(CheckResult&)>& body) {
  CheckResult r;
  r.criterion = criterion;
  r.name = name;
  const auto t0 = Clock::now();
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = seconds_since(t0);
  return r;
}

// ---------------------------------------------------------------------------
// Gradient cases

using OpFn = std::function<Var(Tape&, const std::vector<Var>&)>;
using InputGen = std::function<std::vector<Tensor>(Rng&)>;

struct OpCase {
  std::string name;
  OpFn op;
  InputGen inputs;
};

/// Values with |x| >= margin away from every point in `kinks`.
Tensor away_from(Shape shape, Rng& rng, const std::vector<double>& kinks, double margin) {
  Tensor t(std::move(shape));
  for (double& x : t.data()) {
    bool ok = false;
    while (!ok) {
      x = rng.normal();
      ok = true;
      for (double k : kinks) ok = ok && std::abs(x - k) >= margin;
    }
  }
  return t;
}

Tensor unit_quaternions(std::size_t n, Rng& rng) {
  Tensor q({n, 4});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int a = 0; a < 4; ++a) s += (q[4 * i + a] = rng.normal()) * q[4 * i + a];
    for (int a = 0; a < 4; ++a) q[4 * i + a] /= std::sqrt(s);
  }
  return q;
}

std::vector<std::uint8_t> random_labels(std::size_t n, std::size_t classes, Rng& rng) {
  std::vector<std::uint8_t> out(n);
  for (auto& l : out) {
    const auto c = static_cast<std::size_t>(rng.uniform() * static_cast<double>(classes + 1));
    l = c >= classes ? kEmptyLabel : static_cast<std::uint8_t>(c);
  }
  return out;
}

GridSpec cube_grid(std::size_t n, double vs) {
  GridSpec g;
  g.dims = {n, n, n};
  g.voxel_size = vs;
  const double half = 0.5 * static_cast<double>(n) * vs;
  g.origin = {-half, -half, -half};
  return g;
}

std::vector<OpCase> op_cases() {
  std::vector<OpCase> c;
  auto unary = [&c](const std::string& name, std::function<Var(Var)> f, double sd = 1.0) {
    c.push_back({name, [f](Tape&, const std::vector<Var>& x) { return f(x[0]); },
                 [sd](Rng& r) { return std::vector<Tensor>{randn({7}, r, sd)}; }});
  };
  c.push_back({"add", [](Tape&, const std::vector<Var>& x) { return add(x[0], x[1]); },
               [](Rng& r) { return std::vector<Tensor>{randn({3, 4}, r), randn({4}, r)}; }});
  c.push_back({"sub", [](Tape&, const std::vector<Var>& x) { return sub(x[0], x[1]); },
               [](Rng& r) { return std::vector<Tensor>{randn({2, 3, 4}, r), randn({3, 1}, r)}; }});
  c.push_back({"mul", [](Tape&, const std::vector<Var>& x) { return mul(x[0], x[1]); },
               [](Rng& r) { return std::vector<Tensor>{randn({3, 4}, r), randn({1, 4}, r)}; }});
  unary("scale", [](Var x) { return scale(x, 1.7); });
  unary("add_scalar", [](Var x) { return add_scalar(x, 0.3); });
  unary("exp", [](Var x) { return exp(x); }, 0.5);
  unary("sin", [](Var x) { return sin(x); });
  unary("cos", [](Var x) { return cos(x); });
  unary("tanh", [](Var x) { return tanh(x); });
  unary("sigmoid", [](Var x) { return sigmoid(x); });
  unary("gelu", [](Var x) { return gelu(x); });
  c.push_back({"relu", [](Tape&, const std::vector<Var>& x) { return relu(x[0]); },
               [](Rng& r) { return std::vector<Tensor>{away_from({9}, r, {0.0}, 0.05)}; }});
  c.push_back({"clamp",
               [](Tape&, const std::vector<Var>& x) { return clamp(x[0], Tensor({1}, -0.5), Tensor({1}, 0.5)); },
               [](Rng& r) { return std::vector<Tensor>{away_from({9}, r, {-0.5, 0.5}, 0.05)}; }});
  c.push_back({"dropout", [](Tape&, const std::vector<Var>& x) { return dropout(x[0], 0.3, 11, 2, 5, true); },
               [](Rng& r) { return std::vector<Tensor>{randn({20}, r)}; }});
  c.push_back({"reshape", [](Tape&, const std::vector<Var>& x) { return reshape(x[0], {3, 4}); },
               [](Rng& r) { return std::vector<Tensor>{randn({2, 6}, r)}; }});
  c.push_back({"slice", [](Tape&, const std::vector<Var>& x) { return slice(x[0], 1, 1, 4); },
               [](Rng& r) { return std::vector<Tensor>{randn({3, 5}, r)}; }});
  c.push_back({"concat", [](Tape&, const std::vector<Var>& x) { return concat({x[0], x[1]}, 1); },
               [](Rng& r) { return std::vector<Tensor>{randn({2, 3}, r), randn({2, 2}, r)}; }});
  c.push_back({"sum", [](Tape&, const std::vector<Var>& x) { return sum(x[0]); },
               [](Rng& r) { return std::vector<Tensor>{randn({2, 3}, r)}; }});
  c.push_back({"mean", [](Tape&, const std::vector<Var>& x) { return mean(x[0]); },
               [](Rng& r) { return std::vector<Tensor>{randn({2, 3}, r)}; }});
  c.push_back({"sum_axis", [](Tape&, const std::vector<Var>& x) { return sum_axis(x[0], 1); },
               [](Rng& r) { return std::vector<Tensor>{randn({2, 3, 4}, r)}; }});
  c.push_back({"matmul", [](Tape&, const std::vector<Var>& x) { return matmul(x[0], x[1]); },
               [](Rng& r) { return std::vector<Tensor>{randn({2, 3, 4}, r), randn({4, 5}, r)}; }});
  c.push_back({"linear", [](Tape&, const std::vector<Var>& x) { return linear(x[0], x[1], x[2]); },
               [](Rng& r) { return std::vector<Tensor>{randn({5, 3}, r), randn({3, 4}, r), randn({4}, r)}; }});
  c.push_back({"softmax", [](Tape&, const std::vector<Var>& x) { return softmax(x[0], 0); },
               [](Rng& r) { return std::vector<Tensor>{randn({3, 5}, r)}; }});
  c.push_back({"layer_norm", [](Tape&, const std::vector<Var>& x) { return layer_norm(x[0], x[1], x[2]); },
               [](Rng& r) { return std::vector<Tensor>{randn({4, 6}, r), randn({6}, r), randn({6}, r)}; }});
  c.push_back({"normalize_rows", [](Tape&, const std::vector<Var>& x) { return normalize_rows(x[0]); },
               [](Rng& r) { return std::vector<Tensor>{randn({4, 3}, r)}; }});
  c.push_back({"conv2d.depthwise",
               [](Tape&, const std::vector<Var>& x) { return conv2d(x[0], x[1], ConvMode::kDepthwise, 1, 1); },
               [](Rng& r) { return std::vector<Tensor>{randn({5, 6, 3}, r), randn({3, 3, 3}, r)}; }});
  c.push_back({"conv2d.pointwise",
               [](Tape&, const std::vector<Var>& x) { return conv2d(x[0], x[1], ConvMode::kPointwise); },
               [](Rng& r) { return std::vector<Tensor>{randn({4, 4, 3}, r), randn({3, 5}, r)}; }});
  c.push_back({"conv2d.strided",
               [](Tape&, const std::vector<Var>& x) { return conv2d(x[0], x[1], ConvMode::kStrided, 2, 1); },
               [](Rng& r) { return std::vector<Tensor>{randn({6, 6, 2}, r), randn({3, 3, 2, 3}, r)}; }});
  c.push_back({"conv2d.transposed",
               [](Tape&, const std::vector<Var>& x) { return conv2d(x[0], x[1], ConvMode::kTransposed, 2, 0); },
               [](Rng& r) { return std::vector<Tensor>{randn({3, 3, 2}, r), randn({2, 2, 2, 3}, r)}; }});
  c.push_back({"global_avg_pool", [](Tape&, const std::vector<Var>& x) { return global_avg_pool(x[0]); },
               [](Rng& r) { return std::vector<Tensor>{randn({3, 4, 5}, r)}; }});
  c.push_back({"bilinear_sample", [](Tape&, const std::vector<Var>& x) { return bilinear_sample(x[0], x[1]); },
               [](Rng& r) { return std::vector<Tensor>{randn({4, 5, 3}, r), uniform({6, 2}, r, 0.15, 0.85)}; }});
  c.push_back({"project_points",
               [](Tape&, const std::vector<Var>& x) {
                 static const CameraRig rig = ring_rig(cube_grid(8, 0.5), 3, 6.0, 3.0, 70.0, 32, 24);
                 return add(project_points(x[0], rig.views[0]).uv, project_points(x[0], rig.views[2]).uv);
               },
               [](Rng& r) { return std::vector<Tensor>{randn({5, 3}, r, 0.8)}; }});
  c.push_back({"splat_distribution",
               [](Tape&, const std::vector<Var>& x) {
                 SplatOptions o;
                 o.kappa = std::numeric_limits<double>::infinity();
                 return splat_distribution(x[0], x[1], x[2], x[3], x[4], cube_grid(8, 0.5), o);
               },
               [](Rng& r) {
                 return std::vector<Tensor>{uniform({4, 3}, r, -1.5, 1.5), uniform({4, 3}, r, 0.4, 0.9),
                                            unit_quaternions(4, r), uniform({4}, r, 0.2, 0.8), randn({4, 3}, r)};
               }});
  c.push_back({"cross_entropy",
               [](Tape&, const std::vector<Var>& x) {
                 Rng lr(7);
                 return cross_entropy(softmax(x[0], 1), random_labels(12, 3, lr));
               },
               [](Rng& r) { return std::vector<Tensor>{randn({12, 4}, r)}; }});
  c.push_back({"lovasz_softmax",
               [](Tape&, const std::vector<Var>& x) {
                 Rng lr(8);
                 return lovasz_softmax(softmax(x[0], 1), random_labels(12, 3, lr));
               },
               [](Rng& r) { return std::vector<Tensor>{randn({12, 4}, r)}; }});
  return c;
}

double check_case(const OpCase& oc, std::uint64_t seed) {
  Rng rng(seed * 7919 + 13);
  const std::vector<Tensor> inputs = oc.inputs(rng);
  Tape probe(false);
  std::vector<Var> xs;
  for (const Tensor& t : inputs) xs.push_back(probe.constant(t));
  const Tensor w = randn(oc.op(probe, xs).shape(), rng);
  const ScalarFn fn = [&](Tape& t, const std::vector<Var>& x) { return sum(mul(oc.op(t, x), t.constant(w))); };
  GradCheckOptions opts;
  opts.seed = seed;
  return gradcheck(fn, inputs, opts).max_rel_error;
}

RunConfig composite_config(std::uint64_t seed) {
  RunConfig cfg = parse_config_text(
      "grid.dims = 8, 8, 8\n"
      "grid.origin = -2, -2, -2\n"
      "camera.views = 2\ncamera.radius = 6\ncamera.height = 3\ncamera.width = 16\ncamera.height_px = 16\n"
      "tokens.layers = 4\ntokens.patch_h = 4\ntokens.patch_w = 4\ntokens.channels = 8\n"
      "hgfa.groups = 2\nhgfa.layers_per_group = 2\nhgfa.expansion_ratios = 2, 1.5\n"
      "hgfa.pyramid_dims = 6, 4\nhgfa.scale_factors = 2, 0.5\nhgfa.target_dim = 4\nhgfa.se_reduction = 2\n"
      "decoder.hidden = 8\ndecoder.fourier_bands = 2\n"
      "gaussians.count = 8\n"
      "splat.kappa = inf\n",
      "<composite>");
  cfg.seed = seed;
  return cfg;
}

/// Largest relative error of the token -> adapter -> decoder -> splat -> loss composite.
double check_composite(std::uint64_t seed) {
  const RunConfig cfg = composite_config(seed);
  const Dataset data = make_dataset(cfg);
  ParamStore ps = init_model(cfg);
  Rng rng(seed + 101);
  for (const std::string& n : ps.names()) {
    const bool zero_head = n.find("w2") != std::string::npos || n.ends_with("lsfp.pw");
    if (zero_head) ps.at(n) = randn(ps.at(n).shape(), rng, 0.3);
  }
  const std::vector<std::string> names = ps.names();
  std::vector<Tensor> inputs;
  for (const std::string& n : names) inputs.push_back(ps.at(n));
  const TokenStack& tok = data.tokens;
  for (std::size_t v = 0; v < tok.views; ++v) {
    for (std::size_t j = 0; j < tok.layers; ++j) inputs.push_back(tok.layer(v, j));
  }
  const ScalarFn fn = [&](Tape& t, const std::vector<Var>& x) {
    std::map<std::string, Var> vars;
    for (std::size_t i = 0; i < names.size(); ++i) vars.emplace(names[i], x[i]);
    const Bound p(t, vars);
    std::vector<FeaturePyramid> pyramids;
    for (std::size_t v = 0; v < tok.views; ++v) {
      const auto first = x.begin() + static_cast<std::ptrdiff_t>(names.size() + v * tok.layers);
      const std::vector<Var> layers(first, first + static_cast<std::ptrdiff_t>(tok.layers));
      pyramids.push_back(hgfa_view(p, layers, tok.patch_h, tok.patch_w, cfg.hgfa, true, cfg.seed + v, 3));
    }
    const GaussianVars g = decode_gaussians(p, pyramids, data.rig, data.init, cfg.grid, cfg.decoder);
    const Var probs = splat_distribution(g.means, g.scales, g.rotations, sigmoid(g.opacity_logits), g.logits,
                                         cfg.grid, cfg.splat);
    return compute_loss(probs, data.gt, cfg.loss).total;
  };
  // The loss sums hundreds of voxel terms, so rounding noise in the central
  // difference dominates at the default step; truncation error at 1e-4 is far smaller.
  GradCheckOptions opts;
  opts.step = 1e-4;
  opts.max_coords = 8;
  opts.seed = seed;
  return gradcheck(fn, inputs, opts).max_rel_error;
}

}  // namespace

std::string CheckResult::line() const {
  return std::string(passed ? "[PASS] " : "[FAIL] ") + std::to_string(criterion) + " " + name + ": " + detail +
         " (" + num(seconds) + " s)";
}

CheckResult check_gradient_fidelity() {
  return guarded(1, "gradient fidelity", [](CheckResult& r) {
    const auto t0 = Clock::now();
    constexpr int kSeeds = 5;
    double worst = 0.0;
    std::string worst_name;
    std::size_t checks = 0;
    for (const OpCase& oc : op_cases()) {
      for (int s = 0; s < kSeeds; ++s) {
        const double e = check_case(oc, static_cast<std::uint64_t>(s));
        ++checks;
        if (!(e <= worst)) {
          worst = e;
          worst_name = oc.name;
        }
      }
    }
    for (int s = 0; s < kSeeds; ++s) {
      const double e = check_composite(static_cast<std::uint64_t>(s));
      ++checks;
      if (!(e <= worst)) {
        worst = e;
        worst_name = "composite";
      }
    }
    const double secs = seconds_since(t0);
    r.passed = worst < 1e-4 && secs < 120.0;
    r.detail = std::to_string(checks) + " checks over " + std::to_string(kSeeds) + " seeds, worst relative error " +
               num(worst) + " (" + worst_name + "), limit 1e-4, " + num(secs) + " s of 120";
  });
}

CheckResult check_gatf_normalization() {
  return guarded(2, "fusion weights sum to one", [](CheckResult& r) {
    Rng rng(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t M = 1 + static_cast<std::size_t>(rng.uniform() * 6);
      const std::size_t L = 1 + static_cast<std::size_t>(rng.uniform() * 24);
      const std::size_t C = 4 + static_cast<std::size_t>(rng.uniform() * 13);
      HgfaConfig cfg;
      cfg.groups = 1;
      cfg.layers_per_group = M;
      cfg.expansion_ratios = {2};
      cfg.pyramid_dims = {4};
      cfg.scale_factors = {1};
      cfg.target_dim = 4;
      ParamStore ps;
      init_hgfa_params(ps, cfg, C, rng);
      ps.at("hgfa.g0.gatf.w2") = randn(ps.at("hgfa.g0.gatf.w2").shape(), rng, 3.0);
      ps.at("hgfa.g0.gatf.b2") = randn({1}, rng);
      Tape t(false);
      std::vector<Var> layers;
      for (std::size_t m = 0; m < M; ++m) layers.push_back(t.constant(randn({L, C}, rng, 1.0 + trial % 5)));
      const Tensor& w = gatf_fuse(Bound(t, ps, false), 0, layers).weights.value();
      for (std::size_t l = 0; l < L; ++l) {
        double s = 0.0;
        for (std::size_t m = 0; m < M; ++m) s += w[m * L + l];
        worst = std::max(worst, std::abs(s - 1.0));
      }
    }
    r.passed = worst <= 1e-10;
    r.detail = "100 random stacks, worst |sum - 1| = " + num(worst) + ", limit 1e-10";
  });
}

CheckResult check_shape_law(const std::string& full_scale_config) {
  return guarded(3, "shape law", [&](CheckResult& r) {
    HgfaConfig cfg;  // tau = {4, 2, 1, 0.5}
    cfg.pyramid_dims = {6, 6, 6, 6};
    cfg.target_dim = 4;
    cfg.validate(8, 8, 8, 8);
    ParamStore ps;
    Rng rng(3);
    init_hgfa_params(ps, cfg, 8, rng);
    Tape t(false);
    std::vector<Var> maps;
    for (int k = 0; k < 4; ++k) maps.push_back(t.constant(randn({8, 8, 8}, rng)));
    const std::size_t rows = lsfp_pyramid(Bound(t, ps, false), maps, cfg).flattened().shape()[0];
    const std::size_t predicted = cfg.flattened_tokens(8, 8);

    const RunConfig full = parse_config(full_scale_config);
    const bool full_ok = full.hgfa.groups == 4 && full.hgfa.layers_per_group == 6 &&
                          full.hgfa.expansion_ratios == std::vector<double>{4, 3, 2, 1.5} &&
                          full.hgfa.pyramid_dims == std::vector<std::size_t>{768, 512, 384, 256} &&
                          full.hgfa.target_dim == 128 && full.gaussians == 25600 &&
                          full.grid.dims == std::array<std::size_t, 3>{200, 200, 16};
    r.passed = rows == 1360 && predicted == 1360 && full_ok;
    r.detail = "L = 64 flattens to " + std::to_string(rows) + " tokens (predicted " + std::to_string(predicted) +
               ", want 1360); full-scale profile " + (full_ok ? "validates" : "has unexpected values");
  });
}

CheckResult check_splat_oracle() {
  return guarded(4, "splatting oracle", [](CheckResult& r) {
    const auto t0 = Clock::now();
    GridSpec grid;
    grid.dims = {32, 32, 16};
    grid.origin = {-8, -8, -4};
    grid.voxel_size = 0.5;
    double worst_inf = 0.0, worst_excess = -1.0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      Rng rng(seed + 40);
      GaussianSet set(256, 4);
      set.means = uniform({256, 3}, rng, -7.0, 7.0);
      for (std::size_t i = 0; i < 256; ++i) set.means[3 * i + 2] *= 0.5;
      set.scales = uniform({256, 3}, rng, 0.15, 1.2);
      set.rotations = unit_quaternions(256, rng);
      set.opacity_logits = randn({256}, rng, 1.5);
      set.logits = randn({256, 4}, rng);
      const OccupancyGrid oracle = splat_oracle(set, grid);
      SplatOptions inf;
      inf.kappa = std::numeric_limits<double>::infinity();
      const OccupancyGrid full = splat(set, grid, inf);
      const OccupancyGrid culled = splat(set, grid, {});
      double keep = 1.0;  // prod (1 - a_i exp(-kappa^2 / 2))
      for (std::size_t i = 0; i < 256; ++i) keep *= 1.0 - set.opacity(i) * std::exp(-0.5 * 3.0 * 3.0);
      const double bound = 1.0 - keep;
      for (std::size_t v = 0; v < grid.count(); ++v) {
        worst_inf = std::max(worst_inf, std::abs(full.occupancy[v] - oracle.occupancy[v]));
        worst_excess = std::max(worst_excess, std::abs(culled.occupancy[v] - oracle.occupancy[v]) - bound);
      }
    }
    const double secs = seconds_since(t0);
    r.passed = worst_inf < 1e-12 && worst_excess <= 0.0 && secs < 60.0;
    r.detail = "J = 256 on 32x32x16, 3 seeds: kappa = inf max diff " + num(worst_inf) +
               " (limit 1e-12); kappa = 3 max excess over tail bound " + num(worst_excess) + ", " + num(secs) +
               " s of 60";
  });
}

CheckResult check_lovasz_hypercube() {
  return guarded(5, "Lovasz on hard predictions", [](CheckResult& r) {
    Rng rng(55);
    double worst = 0.0;
    std::size_t compared = 0;
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t C = 2 + static_cast<std::size_t>(rng.uniform() * 5);
      const std::size_t V = 10 + static_cast<std::size_t>(rng.uniform() * 200);
      const auto gt = random_labels(V, C, rng);
      const auto pred = random_labels(V, C, rng);
      Tensor probs({V, C + 1});
      for (std::size_t v = 0; v < V; ++v) probs[v * (C + 1) + label_column(pred[v], C)] = 1.0;
      const auto loss = lovasz_per_class(probs, gt);
      for (std::size_t k = 0; k <= C; ++k) {
        if (!loss[k]) continue;
        std::size_t inter = 0, uni = 0;
        for (std::size_t v = 0; v < V; ++v) {
          const bool g = label_column(gt[v], C) == k, p = label_column(pred[v], C) == k;
          inter += g && p;
          uni += g || p;
        }
        const double jaccard = static_cast<double>(inter) / static_cast<double>(uni);
        worst = std::max(worst, std::abs(*loss[k] - (1.0 - jaccard)));
        ++compared;
      }
    }
    r.passed = worst <= 1e-9 && compared > 0;
    r.detail = "50 random one-hot predictions, " + std::to_string(compared) + " class losses, worst |loss - (1 - J)| = " +
               num(worst) + ", limit 1e-9";
  });
}

CheckResult check_metric_arithmetic() {
  return guarded(6, "metric arithmetic", [](CheckResult& r) {
    // class 0: TP 3, FP 1, FN 2 -> 3 / 6
    ConfusionMatrix a(2);
    a.at(0, 0) = 3;
    a.at(1, 0) = 1;
    a.at(0, 1) = 2;
    a.at(1, 1) = 4;
    a.at(2, 2) = 10;
    const bool cls = class_iou(a, 0).value == 0.5;
    // class 1: TP 4, FP 2, FN 1 -> 4 / 7; mIoU = (1/2 + 4/7) / 2 = 15/28
    const bool mean = miou(a).value == (0.5 + 4.0 / 7.0) / 2.0;
    // geometry: occupied TP 10, nothing confused with empty -> 1
    const bool geo = sc_iou(a).value == 1.0;
    ConfusionMatrix b(2);
    b.at(0, 0) = 3;
    b.at(0, 2) = 1;  // occupied predicted empty
    b.at(2, 1) = 2;  // empty predicted occupied
    b.at(2, 2) = 5;
    const bool geo2 = sc_iou(b).value == 0.5;  // 3 / (3 + 1 + 2)

    RunConfig cfg = parse_config_text("");
    const LabelGrid gt = rasterize_scene(toy_scene(cfg.grid), cfg.num_classes);
    const EvalReport self = score(gt, gt);
    const bool self_ok = self.iou.defined && self.iou.value == 1.0 && self.miou.value == 1.0;
    r.passed = cls && mean && geo && geo2 && self_ok;
    r.detail = std::string("TP=3 FP=1 FN=2 -> ") + num(class_iou(a, 0).value) + ", mIoU " + num(miou(a).value) +
               " (want 15/28), SC IoU " + num(sc_iou(b).value) + " (want 0.5), gt self-evaluation IoU " +
               num(self.iou.value) + " mIoU " + num(self.miou.value);
  });
}

CheckResult check_toy_overfit(const std::string& toy_config) {
  return guarded(7, "toy overfit", [&](CheckResult& r) {
    const auto t0 = Clock::now();
    const RunConfig cfg = parse_config(toy_config);
    const Dataset data = make_dataset(cfg);
    auto run = [&](std::vector<std::string>& log) {
      TrainState state = init_train_state(cfg);
      train(cfg, data, state, [&](const StepLog& l) { log.push_back(l.line()); });
      return state;
    };
    std::vector<std::string> log_a, log_b;
    const TrainState a = run(log_a);
    const double secs = seconds_since(t0);
    const EvalReport rep = evaluate(cfg, data, a.params);
    const TrainState b = run(log_b);
    const bool repro = log_a == log_b && a == b && evaluate(cfg, data, b.params).text() == rep.text();
    r.passed = rep.miou.value >= 0.75 && rep.iou.value >= 0.85 && secs < 600.0 && repro;
    r.detail = std::to_string(cfg.optim.steps) + " steps: mIoU " + num(rep.miou.value) + " (floor 0.75), SC IoU " +
               num(rep.iou.value) + " (floor 0.85), " + num(secs) + " s of 600 per run, rerun " +
               (repro ? "bit-identical" : "DIFFERS");
  });
}

CheckResult check_identity_inits() {
  return guarded(8, "zero-initialized residual heads pass through", [](CheckResult& r) {
    Rng rng(8);
    HgfaConfig hc;
    ParamStore ps;
    init_hgfa_params(ps, hc, 32, rng);
    Tape t(false);
    const Bound p(t, ps, false);
    Tensor x = randn({64, 32}, rng);
    for (double& v : x.data()) v += 0.0;  // no negative zeros
    const bool tatr = same_bytes(tatr_refine(p, 1, t.constant(x), hc, true, 3, 4).value(), x);
    const bool lsfp = same_bytes(lsfp_spatial_block(p, 2, t.constant(x), 8, 8, hc).value(), x.reshaped({8, 8, 32}));

    const RunConfig cfg = parse_config_text("");
    const Dataset data = make_dataset(cfg);
    const ParamStore model = init_model(cfg);
    const Bound mp(t, model, false);
    const auto pyramids = hgfa_forward(mp, data.tokens, cfg.hgfa, false, cfg.seed, 0);
    const GaussianSet out = decode_gaussians(mp, pyramids, data.rig, data.init, cfg.grid, cfg.decoder).values();
    const bool dec = same_bytes(out.means, data.init.means) && same_bytes(out.scales, data.init.scales) &&
                     same_bytes(out.rotations, data.init.rotations) &&
                     same_bytes(out.opacity_logits, data.init.opacity_logits) &&
                     same_bytes(out.logits, data.init.logits);
    r.passed = tatr && lsfp && dec;
    r.detail = std::string("token refinement ") + (tatr ? "identical" : "DIFFERS") + ", spatial block " +
               (lsfp ? "identical" : "DIFFERS") + ", decoder " + (dec ? "identical" : "DIFFERS") + " (bytewise)";
  });
}

CheckResult check_parallel_determinism() {
  return guarded(9, "determinism across worker counts", [](CheckResult& r) {
    const RunConfig cfg = parse_config_text("");
    const Dataset data = make_dataset(cfg);
    Rng rng(9);
    GaussianSet set = data.init;
    for (double& v : set.opacity_logits.data()) v = rng.normal() * 2.0;
    for (double& v : set.logits.data()) v = rng.normal();
    for (double& v : set.means.data()) v += 0.3 * rng.normal();
    for (std::size_t i = 0; i < set.size(); ++i) {
      for (int a = 0; a < 3; ++a) set.means[3 * i + a] = std::clamp(set.means[3 * i + a], -7.9, 7.9);
      set.means[3 * i + 2] = std::clamp(set.means[3 * i + 2], -1.9, 1.9);
    }
    const Tensor w = randn({cfg.grid.count(), cfg.num_classes + 1}, rng);

    bool splat_ok = true, grad_ok = true, metric_ok = true;
    OccupancyGrid ref;
    std::vector<Tensor> ref_grads;
    ConfusionMatrix ref_cm;
    for (unsigned workers : {1u, 2u, 8u}) {
      SplatOptions o;
      o.workers = workers;
      const OccupancyGrid g = splat(set, cfg.grid, o);

      Tape t;
      const Var m = t.leaf(set.means, true), s = t.leaf(set.scales, true), q = t.leaf(set.rotations, true);
      const Var a = t.leaf(set.opacities(), true), c = t.leaf(set.logits, true);
      const Var loss = sum(mul(splat_distribution(m, s, q, a, c, cfg.grid, o), t.constant(w)));
      t.backward(loss);
      const std::vector<Tensor> grads{t.grad(m), t.grad(s), t.grad(q), t.grad(a), t.grad(c)};

      ConfusionMatrix cm(cfg.num_classes);
      cm.accumulate(labels_from(g, cfg.threshold), data.gt, workers);
      if (workers == 1) {
        ref = g;
        ref_grads = grads;
        ref_cm = cm;
        continue;
      }
      splat_ok = splat_ok && same_bytes(g.occupancy, ref.occupancy) && same_bytes(g.semantics, ref.semantics);
      for (std::size_t i = 0; i < grads.size(); ++i) grad_ok = grad_ok && same_bytes(grads[i], ref_grads[i]);
      metric_ok = metric_ok && cm == ref_cm;
    }
    r.passed = splat_ok && grad_ok && metric_ok;
    r.detail = std::string("workers 1, 2, 8: splat ") + (splat_ok ? "identical" : "DIFFERS") + ", splat gradients " +
               (grad_ok ? "identical" : "DIFFER") + ", confusion matrix " + (metric_ok ? "identical" : "DIFFERS");
  });
}

std::vector<CheckResult> run_selftest(const SelftestOptions& opts) {
  std::vector<CheckResult> out;
  out.push_back(check_gradient_fidelity());
  out.push_back(check_gatf_normalization());
  out.push_back(check_shape_law(opts.config_dir + "/full_scale.cfg"));
  out.push_back(check_splat_oracle());
  out.push_back(check_lovasz_hypercube());
  out.push_back(check_metric_arithmetic());
  if (opts.include_training) {
    out.push_back(check_toy_overfit(opts.config_dir + "/toy.cfg"));
  } else {
    CheckResult skipped;
    skipped.criterion = 7;
    skipped.name = "toy overfit";
    skipped.passed = true;
    skipped.detail = "skipped (run with --full)";
    out.push_back(skipped);
  }
  out.push_back(check_identity_inits());
  out.push_back(check_parallel_determinism());
  return out;
}

}  // namespace vg3s
