// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "vg3s/decoder.hpp"
#include "vg3s/error.hpp"
#include "vg3s/gradcheck.hpp"
#include "vg3s/ops.hpp"
#include "vg3s/rng.hpp"

namespace vg3s {
namespace {

Tensor random_tensor(Shape shape, Rng& rng, double sd = 1.0) {
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = sd * rng.normal();
  return t;
}

bool same_bytes(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0;
}

Camera forward_camera() {
  Camera cam;
  cam.intrinsics = {100, 100, 64, 64};
  cam.width = 128;
  cam.height = 128;
  return cam;
}

GridSpec small_grid() {
  GridSpec g;
  g.dims = {8, 8, 4};
  g.origin = {-2, -2, -1};
  g.voxel_size = 0.5;
  return g;
}

std::vector<FeaturePyramid> random_pyramids(Tape& t, std::size_t views, std::size_t D, Rng& rng) {
  std::vector<FeaturePyramid> out(views);
  for (auto& fp : out) {
    fp.levels.push_back(t.constant(random_tensor({8, 8, D}, rng)));
    fp.levels.push_back(t.constant(random_tensor({2, 2, D}, rng)));
  }
  return out;
}

TEST(Projection, PinholeCenterPixel) {
  const Camera cam = forward_camera();
  const auto px = project(cam, {0, 0, 10});
  ASSERT_TRUE(px.has_value());
  EXPECT_DOUBLE_EQ(px->u, 64.0);
  EXPECT_DOUBLE_EQ(px->v, 64.0);
  Tape t;
  const PointProjection p = project_points(t.constant(Tensor({1, 3}, std::vector<double>{0, 0, 10})), cam);
  EXPECT_TRUE(p.visible[0]);
  EXPECT_DOUBLE_EQ(p.uv.value()[0] * 128, 64.0);
  EXPECT_DOUBLE_EQ(p.uv.value()[1] * 128, 64.0);
}

TEST(Projection, HiddenPoints) {
  const Camera cam = forward_camera();
  Tape t;
  const Tensor m({3, 3}, std::vector<double>{0, 0, -5, 100, 0, 1, 1, 1, 5});
  const PointProjection p = project_points(t.constant(m), cam);
  EXPECT_FALSE(p.visible[0]);  // behind
  EXPECT_FALSE(p.visible[1]);  // outside the image
  EXPECT_TRUE(p.visible[2]);
  EXPECT_DOUBLE_EQ(p.uv.value()[2 * 2], (100.0 / 5 + 64) / 128);
}

TEST(Projection, GradientMatchesFiniteDifferences) {
  const CameraRig rig = ring_rig(small_grid(), 3, 6.0, 3.0, 70.0, 32, 24);
  Rng rng(1);
  const Tensor m = random_tensor({5, 3}, rng, 0.8);
  const Tensor w = random_tensor({5, 2}, rng);
  for (const Camera& cam : rig.views) {
    const auto fn = [&](Tape& t, const std::vector<Var>& x) {
      return sum(mul(project_points(x[0], cam).uv, t.constant(w)));
    };
    EXPECT_LT(gradcheck(fn, {m}).max_rel_error, 1e-6);
  }
}

TEST(Decoder, ZeroHeadIsExactPassThrough) {
  const GridSpec grid;
  const CameraRig rig = ring_rig(grid, 2, 14.0, 8.0, 70.0, 64, 64);
  const DecoderConfig cfg;
  ParamStore ps;
  Rng rng(2);
  init_decoder_params(ps, cfg, 6, 4, rng);
  const GaussianSet init = lattice_init(512, 4, grid, 3);
  Tape t(false);
  const auto pyr = random_pyramids(t, 2, 6, rng);
  const GaussianSet out = decode_gaussians(Bound(t, ps, false), pyr, rig, init, grid, cfg).values();
  EXPECT_TRUE(same_bytes(out.means, init.means));
  EXPECT_TRUE(same_bytes(out.scales, init.scales));
  EXPECT_TRUE(same_bytes(out.rotations, init.rotations));
  EXPECT_TRUE(same_bytes(out.opacity_logits, init.opacity_logits));
  EXPECT_TRUE(same_bytes(out.logits, init.logits));
}

TEST(Decoder, UnseenGaussianGetsZeroFeature) {
  const GridSpec grid = small_grid();
  CameraRig rig;
  rig.views = {forward_camera(), forward_camera()};
  rig.views[1].translation = {0.3, 0, 0};
  Rng rng(4);
  Tape t;
  const auto pyr_a = random_pyramids(t, 2, 4, rng);
  const auto pyr_b = random_pyramids(t, 2, 4, rng);
  const Var m = t.constant(Tensor({2, 3}, std::vector<double>{0.1, 0.2, -0.5, 0.1, 0.2, 0.8}));
  const Tensor fa = pooled_features(m, pyr_a, rig).value();
  for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(fa[c], 0.0);

  // deltas for the hidden Gaussian ignore the features entirely
  DecoderConfig cfg;
  cfg.blocks = 1;
  ParamStore ps;
  init_decoder_params(ps, cfg, 4, 3, rng);
  ps.at("dec.b0.w2") = random_tensor(ps.at("dec.b0.w2").shape(), rng, 0.3);
  GaussianSet init(2, 3);
  init.means = m.value();
  init.scales.fill(0.5);
  init.rotations = Tensor({2, 4}, std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0});
  const Bound p(t, ps, false);
  const GaussianSet a = decode_gaussians(p, pyr_a, rig, init, grid, cfg).values();
  const GaussianSet b = decode_gaussians(p, pyr_b, rig, init, grid, cfg).values();
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a.means[i], b.means[i]);
  EXPECT_EQ(a.opacity_logits[0], b.opacity_logits[0]);
  EXPECT_NE(a.opacity_logits[1], b.opacity_logits[1]);
  init.means[2] = 1.5;
  EXPECT_THROW(decode_gaussians(p, pyr_a, rig, init, grid, cfg), ConfigError);
}

TEST(Decoder, UpdatesRespectVolumeScaleAndRotationInvariants) {
  const GridSpec grid = small_grid();
  const CameraRig rig = ring_rig(grid, 2, 6.0, 3.0, 70.0, 32, 32);
  DecoderConfig cfg;
  cfg.blocks = 3;
  cfg.max_shift_voxels = 6.0;
  cfg.max_log_scale = 4.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    ParamStore ps;
    init_decoder_params(ps, cfg, 4, 3, rng);
    for (const std::string& n : ps.names()) {
      if (n.find("w2") != std::string::npos) ps.at(n) = random_tensor(ps.at(n).shape(), rng, 2.0);
    }
    Tape t(false);
    const auto pyr = random_pyramids(t, 2, 4, rng);
    const GaussianSet out =
        decode_gaussians(Bound(t, ps, false), pyr, rig, lattice_init(32, 3, grid, seed), grid, cfg).values();
    for (std::size_t j = 0; j < out.size(); ++j) {
      double norm = 0.0;
      for (int a = 0; a < 4; ++a) norm += out.rotations[4 * j + a] * out.rotations[4 * j + a];
      EXPECT_NEAR(std::sqrt(norm), 1.0, 1e-9);
      for (int a = 0; a < 3; ++a) {
        EXPECT_GE(out.means[3 * j + a], grid.lower()[a]);
        EXPECT_LE(out.means[3 * j + a], grid.upper()[a]);
        EXPECT_GE(out.scales[3 * j + a], cfg.min_scale_voxels * grid.voxel_size);
        EXPECT_LE(out.scales[3 * j + a], cfg.max_scale_voxels * grid.voxel_size);
      }
    }
  }
}

TEST(Decoder, RigPyramidCountMismatch) {
  const GridSpec grid = small_grid();
  const CameraRig rig = ring_rig(grid, 3, 6.0, 3.0, 70.0, 32, 32);
  DecoderConfig cfg;
  ParamStore ps;
  Rng rng(5);
  init_decoder_params(ps, cfg, 4, 3, rng);
  Tape t(false);
  const auto pyr = random_pyramids(t, 2, 4, rng);
  EXPECT_THROW(decode_gaussians(Bound(t, ps, false), pyr, rig, lattice_init(8, 3, grid, 0), grid, cfg), ShapeError);
  cfg.blocks = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Decoder, GradientMatchesFiniteDifferences) {
  const GridSpec grid = small_grid();
  const CameraRig rig = ring_rig(grid, 2, 6.0, 3.0, 70.0, 32, 32);
  DecoderConfig cfg;
  cfg.hidden = 8;
  cfg.fourier_bands = 2;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(100 + seed);
    ParamStore ps;
    init_decoder_params(ps, cfg, 3, 2, rng);
    for (const std::string& n : ps.names()) {
      if (n.find("w2") != std::string::npos) ps.at(n) = random_tensor(ps.at(n).shape(), rng, 0.3);
    }
    GaussianSet init = lattice_init(6, 2, grid, seed);
    for (double& x : init.means.data()) x *= 0.5;  // away from the clamp planes
    std::vector<std::string> names = ps.names();
    std::vector<Tensor> inputs;
    for (const std::string& n : names) inputs.push_back(ps.at(n));
    for (int v = 0; v < 2; ++v) {
      inputs.push_back(random_tensor({8, 8, 3}, rng));
      inputs.push_back(random_tensor({2, 2, 3}, rng));
    }
    const Tensor wm = random_tensor({6, 3}, rng), ws = random_tensor({6, 3}, rng);
    const Tensor wr = random_tensor({6, 4}, rng), wa = random_tensor({6}, rng), wc = random_tensor({6, 2}, rng);
    const auto fn = [&](Tape& t, const std::vector<Var>& x) {
      std::map<std::string, Var> vars;
      for (std::size_t i = 0; i < names.size(); ++i) vars.emplace(names[i], x[i]);
      std::vector<FeaturePyramid> pyr(2);
      for (std::size_t v = 0; v < 2; ++v) pyr[v].levels = {x[names.size() + 2 * v], x[names.size() + 2 * v + 1]};
      const GaussianVars g = decode_gaussians(Bound(t, vars), pyr, rig, init, grid, cfg);
      Var s = sum(mul(g.means, t.constant(wm)));
      s = add(s, sum(mul(g.scales, t.constant(ws))));
      s = add(s, sum(mul(g.rotations, t.constant(wr))));
      s = add(s, sum(mul(g.opacity_logits, t.constant(wa))));
      return add(s, sum(mul(g.logits, t.constant(wc))));
    };
    GradCheckOptions opts;
    opts.max_coords = 40;
    opts.seed = seed;
    const GradCheckResult r = gradcheck(fn, inputs, opts);
    EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed << " input " << r.worst_input;
  }
}

}  // namespace
}  // namespace vg3s
