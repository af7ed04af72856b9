// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#include "vg3s/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "vg3s/error.hpp"
#include "vg3s/parallel.hpp"

namespace vg3s {

std::uint64_t ConfusionMatrix::total() const noexcept {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

void ConfusionMatrix::accumulate(const LabelGrid& pred, const LabelGrid& gt, unsigned workers) {
  if (!(pred.spec == gt.spec) || pred.labels.size() != gt.labels.size()) {
    throw ShapeError("confusion matrix: prediction and ground truth grids differ");
  }
  if (pred.num_classes != classes_ || gt.num_classes != classes_) {
    throw ShapeError("confusion matrix: expected " + std::to_string(classes_) + " classes");
  }
  auto index = [this](std::uint8_t l) -> std::size_t {
    if (l == kEmptyLabel) return classes_;
    if (l >= classes_) throw ShapeError("confusion matrix: label " + std::to_string(l) + " out of range");
    return l;
  };
  const std::size_t V = gt.labels.size();
  const std::size_t shards = std::max<std::size_t>(1, std::min<std::size_t>(workers, V));
  std::vector<ConfusionMatrix> parts(shards, ConfusionMatrix(classes_));
  parallel_for(shards, workers, [&](std::size_t s0, std::size_t s1) {
    for (std::size_t s = s0; s < s1; ++s) {
      for (std::size_t v = V * s / shards; v < V * (s + 1) / shards; ++v) {
        ++parts[s].at(index(gt.labels[v]), index(pred.labels[v]));
      }
    }
  });
  for (const ConfusionMatrix& p : parts) merge(p);
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) throw ShapeError("confusion matrix: class count mismatch in merge");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

Metric class_iou(const ConfusionMatrix& cm, std::size_t cls) {
  const std::size_t K = cm.num_classes() + 1;
  std::uint64_t tp = cm.at(cls, cls);
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  for (std::size_t o = 0; o < K; ++o) {
    if (o == cls) continue;
    fp += cm.at(o, cls);
    fn += cm.at(cls, o);
  }
  const std::uint64_t uni = tp + fp + fn;
  if (uni == 0) return {};
  return {static_cast<double>(tp) / static_cast<double>(uni), true};
}

Metric miou(const ConfusionMatrix& cm) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < cm.num_classes(); ++c) {
    const Metric m = class_iou(cm, c);
    if (!m.defined) continue;
    sum += m.value;
    ++n;
  }
  if (n == 0) return {};
  return {sum / static_cast<double>(n), true};
}

Metric sc_iou(const ConfusionMatrix& cm) {
  const std::size_t E = cm.num_classes();
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  for (std::size_t g = 0; g < E; ++g) {
    for (std::size_t p = 0; p < E; ++p) tp += cm.at(g, p);
    fn += cm.at(g, E);
  }
  for (std::size_t p = 0; p < E; ++p) fp += cm.at(E, p);
  const std::uint64_t uni = tp + fp + fn;
  if (uni == 0) return {};
  return {static_cast<double>(tp) / static_cast<double>(uni), true};
}

}  // namespace vg3s
