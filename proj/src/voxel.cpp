// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#include "vg3s/voxel.hpp"

#include <fstream>

#include "binio.hpp"
#include "vg3s/error.hpp"

namespace vg3s {
namespace {

constexpr const char* kVoxelMagic = "VG3SVOX1";
constexpr std::size_t kVoxelHeader = 8 + 4 * 4 + 4 * 4;

}  // namespace

void write_voxel_file(const LabelGrid& grid, const std::string& path) {
  if (grid.labels.size() != grid.spec.count()) throw ShapeError("label grid size does not match its spec");
  binio::Writer w;
  w.bytes(kVoxelMagic);
  for (std::size_t d : grid.spec.dims) w.u32(static_cast<std::uint32_t>(d));
  w.u32(static_cast<std::uint32_t>(grid.num_classes));
  for (double o : grid.spec.origin) w.f32(static_cast<float>(o));
  w.f32(static_cast<float>(grid.spec.voxel_size));
  for (std::uint8_t l : grid.labels) w.u8(l);
  w.save(path);
}

LabelGrid read_voxel_file(const std::string& path) {
  const std::vector<char> buf = binio::load(path);
  binio::Reader r(buf, path);
  binio::expect_magic(r, kVoxelMagic);
  GridSpec spec;
  for (auto& d : spec.dims) d = r.u32();
  const std::size_t classes = r.u32();
  for (auto& o : spec.origin) o = r.f32();
  spec.voxel_size = r.f32();
  std::uint64_t count = 0;
  if (!binio::mul_checked(spec.dims[0], spec.dims[1], count) || !binio::mul_checked(count, spec.dims[2], count)) {
    throw FormatError(FormatErrorKind::kDimensionOverflow, path + ": voxel dimensions overflow");
  }
  if (buf.size() < kVoxelHeader + count) {
    throw FormatError(FormatErrorKind::kTruncated, path + ": truncated payload, expected " +
                                                       std::to_string(kVoxelHeader + count) + " bytes, found " +
                                                       std::to_string(buf.size()));
  }
  if (buf.size() > kVoxelHeader + count) {
    throw FormatError(FormatErrorKind::kMalformed,
                      path + ": " + std::to_string(buf.size() - kVoxelHeader - count) + " trailing bytes");
  }
  LabelGrid g(spec, classes);
  for (auto& l : g.labels) {
    l = r.u8();
    if (l != kEmptyLabel && l >= classes) {
      throw FormatError(FormatErrorKind::kMalformed, path + ": label " + std::to_string(l) + " out of range");
    }
  }
  return g;
}

std::array<std::uint8_t, 3> class_color(std::size_t cls) {
  static constexpr std::array<std::array<std::uint8_t, 3>, 8> kPalette{{
      {128, 128, 128},
      {230, 25, 75},
      {60, 180, 75},
      {0, 130, 200},
      {245, 130, 48},
      {145, 30, 180},
      {70, 240, 240},
      {240, 50, 230},
  }};
  return kPalette[cls % kPalette.size()];
}

void write_ply(const LabelGrid& grid, const std::string& path) {
  const GridSpec& s = grid.spec;
  std::size_t occupied = 0;
  for (std::uint8_t l : grid.labels) occupied += l != kEmptyLabel;
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "ply\nformat ascii 1.0\nelement vertex " << occupied
      << "\nproperty float x\nproperty float y\nproperty float z\n"
         "property uchar red\nproperty uchar green\nproperty uchar blue\n"
         "property uchar label\nend_header\n";
  for (std::size_t x = 0; x < s.dims[0]; ++x) {
    for (std::size_t y = 0; y < s.dims[1]; ++y) {
      for (std::size_t z = 0; z < s.dims[2]; ++z) {
        const std::uint8_t l = grid.labels[s.flat(x, y, z)];
        if (l == kEmptyLabel) continue;
        const Vec3 c = s.center(x, y, z);
        const auto rgb = class_color(l);
        out << static_cast<float>(c[0]) << ' ' << static_cast<float>(c[1]) << ' ' << static_cast<float>(c[2]) << ' '
            << int{rgb[0]} << ' ' << int{rgb[1]} << ' ' << int{rgb[2]} << ' ' << int{l} << '\n';
      }
    }
  }
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace vg3s
