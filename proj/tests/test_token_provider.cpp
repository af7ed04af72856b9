// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>

#include "vg3s/error.hpp"
#include "vg3s/rng.hpp"
#include "vg3s/scene.hpp"
#include "vg3s/tokens.hpp"
#include "vg3s/voxel.hpp"

namespace vg3s {
namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("vg3s_" + name)).string();
}

CameraRig desk_rig() { return ring_rig(GridSpec{}, 2, 14.0, 8.0, 70.0, 64, 64); }

FormatErrorKind read_error_kind(const std::string& path, std::string* message = nullptr) {
  try {
    read_token_file(path);
  } catch (const FormatError& e) {
    if (message) *message = e.what();
    return e.kind();
  }
  ADD_FAILURE() << "no FormatError for " << path;
  return FormatErrorKind::kMalformed;
}

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TEST(Scene, ToySceneRasterizesAllClasses) {
  const GridSpec g;
  const SyntheticScene s = toy_scene(g);
  s.validate(4);
  const LabelGrid labels = rasterize_scene(s, 4);
  std::array<std::size_t, 5> counts{};
  for (auto l : labels.labels) ++counts[l == kEmptyLabel ? 4 : l];
  for (std::size_t c = 0; c < 4; ++c) EXPECT_GT(counts[c], 0u) << "class " << c;
  EXPECT_GT(counts[4], 0u);
  // ground occupies the bottom two slabs wherever no box stands
  EXPECT_EQ(labels.labels[g.flat(0, 0, 0)], 0);
  EXPECT_EQ(labels.labels[g.flat(0, 0, 1)], 0);
  EXPECT_EQ(labels.labels[g.flat(0, 0, 2)], kEmptyLabel);
}

TEST(Scene, CastRayHitsGroundFromAbove) {
  SyntheticScene s;
  s.volume = GridSpec{};
  s.ground_height = -1.0;
  const RayHit hit = cast_ray(s, {0, 0, 5}, {0, 0, -1}, 100.0);
  EXPECT_EQ(hit.cls, 0);
  EXPECT_DOUBLE_EQ(hit.depth, 6.0);
  const RayHit miss = cast_ray(s, {0, 0, 5}, {0, 0, 1}, 100.0);
  EXPECT_EQ(miss.cls, -1);
  EXPECT_DOUBLE_EQ(miss.depth, 100.0);
}

TEST(Scene, BoxOutsideVolumeRejected) {
  SyntheticScene s;
  s.boxes.push_back({1, {7.9, 0, 0}, {1, 1, 1}});
  EXPECT_THROW(s.validate(4), ConfigError);
}

TEST(Camera, RingRigValidatesAndSeesCenter) {
  const CameraRig rig = desk_rig();
  rig.validate();
  for (const Camera& cam : rig.views) {
    const auto p = project(cam, {0, 0, 0});
    ASSERT_TRUE(p);
    EXPECT_NEAR(p->u, 32.0, 1e-9);
    EXPECT_NEAR(p->v, 32.0, 1e-9);
  }
}

TEST(Camera, NonOrthonormalRotationRejected) {
  CameraRig rig = desk_rig();
  rig.views[0].rotation[0] = 1.5;
  EXPECT_THROW(rig.validate(), ConfigError);
  rig = desk_rig();
  rig.views[1].intrinsics.fx = 0.0;
  EXPECT_THROW(rig.validate(), ConfigError);
}

TEST(TokenGen, SameSeedIsBitIdentical) {
  const SyntheticScene s = toy_scene(GridSpec{});
  const TokenConfig cfg;
  const TokenStack a = generate_synthetic_tokens(s, desk_rig(), cfg, 7);
  const TokenStack b = generate_synthetic_tokens(s, desk_rig(), cfg, 7);
  EXPECT_EQ(a, b);
  const TokenStack c = generate_synthetic_tokens(s, desk_rig(), cfg, 8);
  EXPECT_NE(a.data, c.data);
  EXPECT_EQ(a.views, 2u);
  EXPECT_EQ(a.layers, 8u);
  EXPECT_EQ(a.tokens_per_view(), 64u);
  EXPECT_EQ(a.channels, 32u);
  a.validate(4);
}

TEST(TokenGen, EmptySceneDepthIsFarSentinel) {
  SyntheticScene empty;
  const TokenConfig cfg;
  for (const Camera& cam : desk_rig().views) {
    const Tensor enc = encode_patches(empty, cam, cfg);
    const std::size_t E = cfg.num_classes + 2;
    for (std::size_t l = 0; l < cfg.patch_h * cfg.patch_w; ++l) {
      EXPECT_EQ(enc[l * E], cfg.far);
      EXPECT_EQ(enc[l * E + E - 1], 1.0);  // "nothing hit" slot
    }
  }
}

TEST(TokenGen, ToySceneEncodingSeesGeometry) {
  const SyntheticScene s = toy_scene(GridSpec{});
  const TokenConfig cfg;
  const Tensor enc = encode_patches(s, desk_rig().views[0], cfg);
  const std::size_t E = cfg.num_classes + 2;
  std::size_t hits = 0;
  for (std::size_t l = 0; l < 64; ++l) {
    if (enc[l * E] < cfg.far) ++hits;
    double onehot = 0.0;
    for (std::size_t c = 1; c < E; ++c) onehot += enc[l * E + c];
    EXPECT_EQ(onehot, 1.0);
  }
  EXPECT_GT(hits, 16u);
}

TEST(TokenGen, ZeroNoiseIdenticalProjectionsGiveIdenticalLayers) {
  TokenConfig cfg;
  cfg.noise = 0.0;
  cfg.layer_variation = 0.0;
  const TokenStack t = generate_synthetic_tokens(toy_scene(GridSpec{}), desk_rig(), cfg, 3);
  for (std::size_t v = 0; v < t.views; ++v) {
    for (std::size_t j = 1; j < t.layers; ++j) EXPECT_EQ(t.layer(v, j), t.layer(v, 0));
  }
}

TEST(TokenGen, LayersDifferWithVariation) {
  const TokenStack t = generate_synthetic_tokens(toy_scene(GridSpec{}), desk_rig(), TokenConfig{}, 3);
  EXPECT_NE(t.layer(0, 0), t.layer(0, 1));
}

TEST(TokenGen, InconsistentPatchGridRejected) {
  TokenConfig cfg;
  cfg.patch_w = 7;
  EXPECT_THROW(generate_synthetic_tokens(toy_scene(GridSpec{}), desk_rig(), cfg, 1), ConfigError);
  cfg = TokenConfig{};
  cfg.layers = 6;
  EXPECT_THROW(generate_synthetic_tokens(toy_scene(GridSpec{}), desk_rig(), cfg, 1), ConfigError);
}

TokenStack random_stack(std::uint64_t seed, TokenDtype dtype) {
  Rng rng(seed);
  const std::size_t S = 1 + rng.next_u64() % 3;
  const std::size_t N = 1 + rng.next_u64() % 5;
  const std::size_t h = 1 + rng.next_u64() % 4;
  const std::size_t w = 1 + rng.next_u64() % 4;
  const std::size_t D = 1 + rng.next_u64() % 9;
  TokenStack t(S, N, h, w, D, dtype);
  for (double& x : t.data) {
    x = 1e3 * rng.normal();
    if (dtype == TokenDtype::kFloat32) x = static_cast<float>(x);
  }
  return t;
}

TEST(TokenFile, RoundtripIsBitExact) {
  const std::string path = temp_path("roundtrip.tok");
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (TokenDtype dt : {TokenDtype::kFloat32, TokenDtype::kFloat64}) {
      const TokenStack t = random_stack(seed, dt);
      write_token_file(t, path);
      const std::string first = read_bytes(path);
      const TokenStack back = read_token_file(path);
      EXPECT_EQ(back, t);
      write_token_file(back, path);
      EXPECT_EQ(read_bytes(path), first);
    }
  }
  std::remove(path.c_str());
}

TEST(TokenFile, HeaderLayoutIsLittleEndian) {
  const std::string path = temp_path("layout.tok");
  TokenStack t(2, 4, 2, 3, 5, TokenDtype::kFloat64);
  write_token_file(t, path);
  const std::string b = read_bytes(path);
  ASSERT_EQ(b.size(), 36u + 2 * 4 * 6 * 5 * 8);
  EXPECT_EQ(b.substr(0, 8), "VG3STOK1");
  const int expect[] = {2, 4, 6, 5, 2, 3, 2};
  for (int i = 0; i < 7; ++i) {
    EXPECT_EQ(static_cast<unsigned char>(b[8 + 4 * i]), expect[i]);
    EXPECT_EQ(b.substr(9 + 4 * i, 3), std::string(3, '\0'));
  }
  std::remove(path.c_str());
}

TEST(TokenFile, WrongMagic) {
  const std::string path = temp_path("magic.tok");
  write_token_file(random_stack(1, TokenDtype::kFloat64), path);
  std::string b = read_bytes(path);
  b[0] = 'X';
  write_bytes(path, b);
  EXPECT_EQ(read_error_kind(path), FormatErrorKind::kMagicMismatch);
  std::remove(path.c_str());
}

TEST(TokenFile, WrongVersion) {
  const std::string path = temp_path("version.tok");
  write_token_file(random_stack(1, TokenDtype::kFloat64), path);
  std::string b = read_bytes(path);
  b[7] = '2';
  write_bytes(path, b);
  EXPECT_EQ(read_error_kind(path), FormatErrorKind::kVersionMismatch);
  std::remove(path.c_str());
}

TEST(TokenFile, TruncatedPayloadNamesByteCounts) {
  const std::string path = temp_path("trunc.tok");
  TokenStack t(1, 2, 2, 2, 3, TokenDtype::kFloat32);
  write_token_file(t, path);
  std::string b = read_bytes(path);
  const std::size_t full = b.size();
  ASSERT_EQ(full, 36u + 24 * 4);
  write_bytes(path, b.substr(0, full - 10));
  std::string msg;
  EXPECT_EQ(read_error_kind(path, &msg), FormatErrorKind::kTruncated);
  EXPECT_NE(msg.find("expected " + std::to_string(full)), std::string::npos) << msg;
  EXPECT_NE(msg.find("found " + std::to_string(full - 10)), std::string::npos) << msg;
  write_bytes(path, b.substr(0, 20));
  EXPECT_EQ(read_error_kind(path), FormatErrorKind::kTruncated);
  std::remove(path.c_str());
}

TEST(TokenFile, DimensionOverflow) {
  const std::string path = temp_path("overflow.tok");
  std::string b = "VG3STOK1";
  auto put = [&b](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  for (std::uint32_t v : {0xffffffffu, 0xffffffffu, 0xfffffff0u, 0xffffffffu, 0xfffffff0u, 1u, 2u}) put(v);
  write_bytes(path, b);
  EXPECT_EQ(read_error_kind(path), FormatErrorKind::kDimensionOverflow);
  std::remove(path.c_str());
}

TEST(TokenFile, BadDtypeAndTokenCount) {
  const std::string path = temp_path("malformed.tok");
  write_token_file(TokenStack(1, 1, 2, 2, 1), path);
  std::string b = read_bytes(path);
  b[32] = 9;
  write_bytes(path, b);
  EXPECT_EQ(read_error_kind(path), FormatErrorKind::kMalformed);
  b = read_bytes(path);
  b[32] = 2;
  b[16] = 5;  // L
  write_bytes(path, b);
  EXPECT_EQ(read_error_kind(path), FormatErrorKind::kMalformed);
  std::remove(path.c_str());
}

TEST(TokenFile, MissingFileIsIoError) {
  EXPECT_THROW(read_token_file(temp_path("does_not_exist.tok")), IoError);
}

TEST(VoxelFile, Roundtrip) {
  const std::string path = temp_path("labels.vox");
  const LabelGrid g = rasterize_scene(toy_scene(GridSpec{}), 4);
  write_voxel_file(g, path);
  EXPECT_EQ(read_voxel_file(path), g);
  std::remove(path.c_str());
}

TEST(VoxelFile, TruncatedAndTrailingRejected) {
  const std::string path = temp_path("bad.vox");
  write_voxel_file(LabelGrid(GridSpec{{2, 2, 2}, {0, 0, 0}, 1.0}, 4), path);
  const std::string good = read_bytes(path);
  for (const auto& [bytes, kind] : {std::pair{good.substr(0, good.size() - 1), FormatErrorKind::kTruncated},
                                    std::pair{good + "!", FormatErrorKind::kMalformed}}) {
    std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes;
    try {
      read_voxel_file(path);
      ADD_FAILURE() << "expected FormatError";
    } catch (const FormatError& e) {
      EXPECT_EQ(e.kind(), kind) << e.what();
    }
  }
  std::remove(path.c_str());
}

TEST(VoxelFile, PlyListsOccupiedVoxels) {
  const std::string path = temp_path("labels.ply");
  LabelGrid g(GridSpec{{2, 2, 2}, {0, 0, 0}, 1.0}, 4);
  g.labels[g.spec.flat(1, 0, 1)] = 2;
  write_ply(g, path);
  const std::string text = read_bytes(path);
  EXPECT_NE(text.find("element vertex 1\n"), std::string::npos);
  EXPECT_NE(text.find("1.5 0.5 1.5 60 180 75 2\n"), std::string::npos) << text;
  std::remove(path.c_str());
}

}  // namespace
}  // namespace vg3s
