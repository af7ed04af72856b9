// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vg3s/config.hpp"
#include "vg3s/decoder.hpp"
#include "vg3s/metrics.hpp"
#include "vg3s/scene.hpp"
#include "vg3s/voxel.hpp"

namespace vg3s {

/// Everything a run derives from (config, seed) before any learning.
struct Dataset {
  SyntheticScene scene;
  CameraRig rig;
  TokenStack tokens;
  LabelGrid gt;
  GaussianSet init;
};

Dataset make_dataset(const RunConfig& cfg);

/// Adapter then decoder parameters, in registration order.
ParamStore init_model(const RunConfig& cfg);

struct Prediction {
  GaussianVars gaussians;
  Var probs;  // [V, C + 1], empty last
};

/// tokens -> adapter -> decoder -> splat.
Prediction run_model(const Bound& p, const Dataset& data, const RunConfig& cfg, bool training, std::uint64_t step);

struct LossTerms {
  Var total;
  double cross_entropy = 0.0;
  double lovasz = 0.0;
};

/// lambda * CE + beta * Lovasz; a term with zero weight is not evaluated.
LossTerms compute_loss(Var probs, const LabelGrid& gt, const LossConfig& cfg);

struct EvalReport {
  ConfusionMatrix confusion;
  Metric iou;
  Metric miou;
  std::vector<Metric> class_iou;
  std::size_t occupied_pred = 0;
  std::size_t occupied_gt = 0;

  /// `key = value` lines; undefined metrics print as "undefined".
  std::string text() const;
};

EvalReport score(const LabelGrid& pred, const LabelGrid& gt, unsigned workers = 1);

/// Frozen forward pass (no dropout), thresholded labels and metrics.
EvalReport evaluate(const RunConfig& cfg, const Dataset& data, const ParamStore& params,
                    GaussianSet* decoded = nullptr);

}  // namespace vg3s
