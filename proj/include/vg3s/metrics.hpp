// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "vg3s/voxel.hpp"

namespace vg3s {

/// Counts indexed [gt][pred] over C classes plus empty (index C).
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes = 0)
      : classes_(num_classes), counts_((num_classes + 1) * (num_classes + 1), 0) {}

  std::size_t num_classes() const noexcept { return classes_; }
  std::uint64_t at(std::size_t gt, std::size_t pred) const { return counts_[gt * (classes_ + 1) + pred]; }
  std::uint64_t& at(std::size_t gt, std::size_t pred) { return counts_[gt * (classes_ + 1) + pred]; }
  std::uint64_t total() const noexcept;

  /// Adds one count per voxel. Shards of the grid are counted on `workers`
  /// threads and merged. Throws ShapeError on mismatched grids.
  void accumulate(const LabelGrid& pred, const LabelGrid& gt, unsigned workers = 1);
  void merge(const ConfusionMatrix& other);

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

struct Metric {
  double value = 0.0;
  bool defined = false;  // false when no class had a non-zero union
};

/// TP / (TP + FP + FN) of one class index (C means empty).
Metric class_iou(const ConfusionMatrix& cm, std::size_t cls);

/// Mean IoU over occupied classes, skipping classes with zero union.
Metric miou(const ConfusionMatrix& cm);

/// IoU of "occupied" after merging all non-empty classes.
Metric sc_iou(const ConfusionMatrix& cm);

}  // namespace vg3s
