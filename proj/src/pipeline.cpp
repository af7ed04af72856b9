// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#include "vg3s/pipeline.hpp"

#include <charconv>

#include "vg3s/error.hpp"
#include "vg3s/losses.hpp"
#include "vg3s/ops.hpp"
#include "vg3s/splat.hpp"

namespace vg3s {
namespace {

// Stream offsets so the three seeded draws never share a sequence.
constexpr std::uint64_t kParamStream = 0x5eedu;
constexpr std::uint64_t kInitStream = 0x1a77u;

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fmt(const Metric& m) { return m.defined ? fmt(m.value) : "undefined"; }

}  // namespace

Dataset make_dataset(const RunConfig& cfg) {
  cfg.validate();
  Dataset d;
  if (cfg.scene == "toy") {
    d.scene = toy_scene(cfg.grid);
  } else {
    d.scene.volume = cfg.grid;
  }
  d.scene.validate(cfg.num_classes);
  d.rig = ring_rig(cfg.grid, cfg.rig.views, cfg.rig.radius, cfg.rig.height, cfg.rig.fov_deg, cfg.rig.width,
                   cfg.rig.height_px);
  TokenConfig tc = cfg.tokens;
  tc.groups = cfg.hgfa.groups;
  tc.num_classes = cfg.num_classes;
  d.tokens = generate_synthetic_tokens(d.scene, d.rig, tc, cfg.seed);
  d.gt = rasterize_scene(d.scene, cfg.num_classes);
  d.init = lattice_init(cfg.gaussians, cfg.num_classes, cfg.grid, splitmix64(cfg.seed ^ kInitStream), cfg.init);
  return d;
}

ParamStore init_model(const RunConfig& cfg) {
  ParamStore store;
  Rng rng(splitmix64(cfg.seed ^ kParamStream));
  init_hgfa_params(store, cfg.hgfa, cfg.tokens.channels, rng);
  init_decoder_params(store, cfg.decoder, cfg.hgfa.target_dim, cfg.num_classes, rng);
  return store;
}

Prediction run_model(const Bound& p, const Dataset& data, const RunConfig& cfg, bool training, std::uint64_t step) {
  const auto pyramids = hgfa_forward(p, data.tokens, cfg.hgfa, training, cfg.seed, step);
  Prediction out;
  out.gaussians = decode_gaussians(p, pyramids, data.rig, data.init, cfg.grid, cfg.decoder);
  const GaussianVars& g = out.gaussians;
  out.probs = splat_distribution(g.means, g.scales, g.rotations, sigmoid(g.opacity_logits), g.logits, cfg.grid,
                                 cfg.splat);
  return out;
}

LossTerms compute_loss(Var probs, const LabelGrid& gt, const LossConfig& cfg) {
  LossTerms t;
  Var total;
  if (cfg.lambda != 0) {
    const Var ce = cross_entropy(probs, gt.labels, cfg);
    t.cross_entropy = ce.value().item();
    total = scale(ce, cfg.lambda);
  }
  if (cfg.beta != 0) {
    const Var lv = lovasz_softmax(probs, gt.labels);
    t.lovasz = lv.value().item();
    total = total.valid() ? add(total, scale(lv, cfg.beta)) : scale(lv, cfg.beta);
  }
  t.total = total;
  return t;
}

std::string EvalReport::text() const {
  std::string out;
  out += "iou = " + fmt(iou) + "\n";
  out += "miou = " + fmt(miou) + "\n";
  for (std::size_t c = 0; c < class_iou.size(); ++c) out += "iou.class" + std::to_string(c) + " = " + fmt(class_iou[c]) + "\n";
  out += "voxels = " + std::to_string(confusion.total()) + "\n";
  out += "occupied.pred = " + std::to_string(occupied_pred) + "\n";
  out += "occupied.gt = " + std::to_string(occupied_gt) + "\n";
  return out;
}

EvalReport score(const LabelGrid& pred, const LabelGrid& gt, unsigned workers) {
  EvalReport r;
  r.confusion = ConfusionMatrix(gt.num_classes);
  r.confusion.accumulate(pred, gt, workers);
  r.iou = sc_iou(r.confusion);
  r.miou = miou(r.confusion);
  for (std::size_t c = 0; c < gt.num_classes; ++c) r.class_iou.push_back(class_iou(r.confusion, c));
  for (std::uint8_t l : pred.labels) r.occupied_pred += l != kEmptyLabel;
  for (std::uint8_t l : gt.labels) r.occupied_gt += l != kEmptyLabel;
  return r;
}

EvalReport evaluate(const RunConfig& cfg, const Dataset& data, const ParamStore& params, GaussianSet* decoded) {
  Tape tape(false);
  const Bound p(tape, params, false);
  const auto pyramids = hgfa_forward(p, data.tokens, cfg.hgfa, false, cfg.seed, 0);
  const GaussianSet set = decode_gaussians(p, pyramids, data.rig, data.init, cfg.grid, cfg.decoder).values();
  const LabelGrid pred = labels_from(splat(set, cfg.grid, cfg.splat), cfg.threshold);
  if (decoded) *decoded = set;
  return score(pred, data.gt, cfg.splat.workers);
}

}  // namespace vg3s
