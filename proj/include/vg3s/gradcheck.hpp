// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "vg3s/autodiff.hpp"

namespace vg3s {

/// Builds a scalar from leaves that require grad.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckOptions {
  double step = 1e-5;
  /// Coordinates probed per input; 0 probes all of them.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
  /// Lower bound on the gradient scale used to normalize errors.
  double scale_floor = 1e-6;
};

struct GradCheckResult {
  /// max_i |analytic_i - numeric_i| / max(|analytic|_inf, |numeric|_inf, floor), worst over inputs.
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  std::size_t coords_checked = 0;
};

/// Compares reverse-mode gradients of `fn` against central finite differences.
GradCheckResult gradcheck(const ScalarFn& fn, const std::vector<Tensor>& inputs, const GradCheckOptions& opts = {});

}  // namespace vg3s
