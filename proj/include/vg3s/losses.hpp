// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "vg3s/autodiff.hpp"

namespace vg3s {

/// Probability floor inside the logarithm of the cross-entropy.
inline constexpr double kLogFloor = 1e-12;

/// Loss inputs are per-voxel distributions [V, C + 1] whose last column is the
/// empty class; ground-truth labels 0..C-1 select a class and kEmptyLabel selects
/// the last column.
struct LossConfig {
  double lambda = 1.0;  // cross-entropy weight
  double beta = 1.0;    // Lovasz-Softmax weight
  std::vector<double> class_weights;  // empty, or one weight per column (C + 1)

  /// Throws ConfigError on negative or all-zero weights.
  void validate(std::size_t columns) const;
};

/// Column of a label in a [V, C + 1] distribution; throws ShapeError when out of range.
std::size_t label_column(std::uint8_t label, std::size_t num_classes);

/// Weighted mean of -log(max(p_gt, 1e-12)).
Var cross_entropy(Var probs, const std::vector<std::uint8_t>& gt, const LossConfig& cfg = {});

/// Lovasz-Softmax averaged over the columns present in gt.
Var lovasz_softmax(Var probs, const std::vector<std::uint8_t>& gt);

/// Per-column Lovasz loss of a distribution tensor; nullopt for columns absent from gt.
std::vector<std::optional<double>> lovasz_per_class(const Tensor& probs, const std::vector<std::uint8_t>& gt);

/// lambda * cross_entropy + beta * lovasz_softmax.
Var total_loss(Var probs, const std::vector<std::uint8_t>& gt, const LossConfig& cfg);

}  // namespace vg3s
