// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "vg3s/camera.hpp"
#include "vg3s/decoder.hpp"
#include "vg3s/gaussian.hpp"
#include "vg3s/grid.hpp"
#include "vg3s/hgfa.hpp"
#include "vg3s/losses.hpp"
#include "vg3s/splat.hpp"
#include "vg3s/tokens.hpp"

namespace vg3s {

struct RigConfig {
  std::size_t views = 2;  // S
  double radius = 14.0;
  double height = 8.0;
  double fov_deg = 70.0;
  std::size_t width = 64;
  std::size_t height_px = 64;
};

struct OptimConfig {
  double peak_lr = 2e-4;
  std::size_t warmup = 30;
  std::size_t steps = 300;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string scene = "toy";  // "toy" or "empty"
  std::size_t num_classes = 4;
  GridSpec grid;
  RigConfig rig;
  TokenConfig tokens;  // groups and num_classes follow hgfa.groups and classes
  HgfaConfig hgfa;
  DecoderConfig decoder;
  InitConfig init;
  std::size_t gaussians = 512;  // J
  SplatOptions splat;
  double threshold = 0.5;  // occupancy threshold for labels
  LossConfig loss;
  OptimConfig optim;

  /// Cross-module checks; every message names the keys involved.
  void validate() const;
};

/// Parses flat `key = value` text. `#` starts a comment. Unknown or repeated
/// keys and malformed values throw ConfigError with the line number.
RunConfig parse_config_text(const std::string& text, const std::string& source = "<config>");
/// Reads and parses a file; IoError when it cannot be read.
RunConfig parse_config(const std::string& path);

/// Every key with its current value, one `key = value` line each, sorted.
std::string dump_config(const RunConfig& cfg);

}  // namespace vg3s
