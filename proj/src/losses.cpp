// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#include "vg3s/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "vg3s/error.hpp"
#include "vg3s/ops.hpp"
#include "vg3s/voxel.hpp"

namespace vg3s {
namespace {

void check_inputs(const Tensor& p, const std::vector<std::uint8_t>& gt) {
  if (p.rank() != 2 || p.dim(1) < 2) throw ShapeError("loss expects [V, C + 1] distributions, got " + shape_str(p.shape()));
  if (p.dim(0) != gt.size()) {
    throw ShapeError("loss: " + std::to_string(p.dim(0)) + " voxels but " + std::to_string(gt.size()) + " labels");
  }
}

/// Lovasz loss of one column and its gradient w.r.t. that column of p.
double lovasz_column(const Tensor& p, const std::vector<std::size_t>& cols, std::size_t k, std::vector<double>* grad) {
  const std::size_t V = cols.size();
  const std::size_t K = p.dim(1);
  std::vector<double> err(V);
  std::vector<char> fg(V);
  double total_fg = 0.0;
  for (std::size_t v = 0; v < V; ++v) {
    fg[v] = cols[v] == k;
    total_fg += fg[v];
    err[v] = fg[v] ? 1.0 - p[v * K + k] : p[v * K + k];
  }
  std::vector<std::size_t> order(V);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return err[a] > err[b]; });
  double loss = 0.0;
  double cum_fg = 0.0;
  double cum_bg = 0.0;
  double prev = 0.0;
  for (std::size_t n = 0; n < V; ++n) {
    const std::size_t v = order[n];
    cum_fg += fg[v];
    cum_bg += 1 - fg[v];
    const double jac = 1.0 - (total_fg - cum_fg) / (total_fg + cum_bg);
    const double w = jac - prev;
    prev = jac;
    loss += err[v] * w;
    if (grad) (*grad)[v] = fg[v] ? -w : w;
  }
  return loss;
}

std::vector<std::size_t> columns_of(const std::vector<std::uint8_t>& gt, std::size_t K) {
  std::vector<std::size_t> cols(gt.size());
  for (std::size_t v = 0; v < gt.size(); ++v) cols[v] = label_column(gt[v], K - 1);
  return cols;
}

}  // namespace

void LossConfig::validate(std::size_t columns) const {
  if (!(lambda >= 0) || !(beta >= 0)) throw ConfigError("loss.lambda and loss.beta must be non-negative");
  if (lambda == 0 && beta == 0) throw ConfigError("loss.lambda and loss.beta cannot both be zero");
  if (!class_weights.empty() && class_weights.size() != columns) {
    throw ConfigError("loss.class_weights needs " + std::to_string(columns) + " entries");
  }
  for (double w : class_weights) {
    if (!(w >= 0)) throw ConfigError("loss.class_weights must be non-negative");
  }
}

std::size_t label_column(std::uint8_t label, std::size_t num_classes) {
  if (label == kEmptyLabel) return num_classes;
  if (label >= num_classes) throw ShapeError("label " + std::to_string(label) + " out of range");
  return label;
}

Var cross_entropy(Var probs, const std::vector<std::uint8_t>& gt, const LossConfig& cfg) {
  const Tensor& p = probs.value();
  check_inputs(p, gt);
  const std::size_t V = gt.size();
  const std::size_t K = p.dim(1);
  if (!cfg.class_weights.empty() && cfg.class_weights.size() != K) throw ConfigError("class weight count mismatch");
  const auto cols = columns_of(gt, K);
  std::vector<double> wv(V, 1.0);
  if (!cfg.class_weights.empty()) {
    for (std::size_t v = 0; v < V; ++v) wv[v] = cfg.class_weights[cols[v]];
  }
  double norm = 0.0;
  for (double w : wv) norm += w;
  double loss = 0.0;
  for (std::size_t v = 0; v < V; ++v) loss -= wv[v] * std::log(std::max(p[v * K + cols[v]], kLogFloor));
  if (norm > 0) loss /= norm;
  Tape& tape = *probs.tape();
  return tape.record("cross_entropy", Tensor::scalar(loss), {probs},
                     [&tape, probs, cols, wv, norm, K](const Tensor& g, const Tensor&) {
                       Tensor* slot = tape.grad_slot(probs);
                       if (!slot || norm <= 0) return;
                       const Tensor& pv = tape.value(probs);
                       for (std::size_t v = 0; v < cols.size(); ++v) {
                         const double x = pv[v * K + cols[v]];
                         if (x > kLogFloor) (*slot)[v * K + cols[v]] -= g.item() * wv[v] / (x * norm);
                       }
                     });
}

std::vector<std::optional<double>> lovasz_per_class(const Tensor& probs, const std::vector<std::uint8_t>& gt) {
  check_inputs(probs, gt);
  const std::size_t K = probs.dim(1);
  const auto cols = columns_of(gt, K);
  std::vector<char> present(K);
  for (std::size_t c : cols) present[c] = 1;
  std::vector<std::optional<double>> out(K);
  for (std::size_t k = 0; k < K; ++k) {
    if (present[k]) out[k] = lovasz_column(probs, cols, k, nullptr);
  }
  return out;
}

Var lovasz_softmax(Var probs, const std::vector<std::uint8_t>& gt) {
  const Tensor& p = probs.value();
  check_inputs(p, gt);
  const std::size_t V = gt.size();
  const std::size_t K = p.dim(1);
  const auto cols = columns_of(gt, K);
  std::vector<char> present(K);
  for (std::size_t c : cols) present[c] = 1;
  std::size_t count = 0;
  double loss = 0.0;
  Tensor grad({V, K});
  std::vector<double> gk(V);
  for (std::size_t k = 0; k < K; ++k) {
    if (!present[k]) continue;
    ++count;
    loss += lovasz_column(p, cols, k, &gk);
    for (std::size_t v = 0; v < V; ++v) grad[v * K + k] = gk[v];
  }
  if (count > 0) {
    loss /= static_cast<double>(count);
    for (double& x : grad.data()) x /= static_cast<double>(count);
  }
  Tape& tape = *probs.tape();
  return tape.record("lovasz_softmax", Tensor::scalar(loss), {probs},
                     [&tape, probs, grad = std::move(grad)](const Tensor& g, const Tensor&) {
                       Tensor* slot = tape.grad_slot(probs);
                       if (!slot) return;
                       for (std::size_t e = 0; e < grad.numel(); ++e) (*slot)[e] += g.item() * grad[e];
                     });
}

Var total_loss(Var probs, const std::vector<std::uint8_t>& gt, const LossConfig& cfg) {
  cfg.validate(probs.value().rank() == 2 ? probs.value().dim(1) : 0);
  if (cfg.beta == 0) return scale(cross_entropy(probs, gt, cfg), cfg.lambda);
  if (cfg.lambda == 0) return scale(lovasz_softmax(probs, gt), cfg.beta);
  return add(scale(cross_entropy(probs, gt, cfg), cfg.lambda), scale(lovasz_softmax(probs, gt), cfg.beta));
}

}  // namespace vg3s
