// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

namespace vg3s {

struct CheckResult {
  int criterion = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;

  /// "[PASS] 3 shape law: ..." style line.
  std::string line() const;
};

struct SelftestOptions {
  bool include_training = true;      // criterion 7 takes minutes
  std::string config_dir = VG3S_CONFIG_DIR;  // holds toy.cfg and full_scale.cfg
};

// One function per acceptance criterion; each catches its own exceptions.
CheckResult check_gradient_fidelity();
CheckResult check_gatf_normalization();
CheckResult check_shape_law(const std::string& full_scale_config);
CheckResult check_splat_oracle();
CheckResult check_lovasz_hypercube();
CheckResult check_metric_arithmetic();
CheckResult check_toy_overfit(const std::string& toy_config);
CheckResult check_identity_inits();
CheckResult check_parallel_determinism();

std::vector<CheckResult> run_selftest(const SelftestOptions& opts = {});

}  // namespace vg3s
