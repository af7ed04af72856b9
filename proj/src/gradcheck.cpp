// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#include "vg3s/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vg3s/rng.hpp"

namespace vg3s {
namespace {

double evaluate(const ScalarFn& fn, const std::vector<Tensor>& inputs) {
  Tape tape(false);
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(tape.leaf(t, false));
  return fn(tape, vars).value().item();
}

}  // namespace

GradCheckResult gradcheck(const ScalarFn& fn, const std::vector<Tensor>& inputs, const GradCheckOptions& opts) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.leaf(t, true));
    Var loss = fn(tape, vars);
    tape.backward(loss);
    for (Var v : vars) analytic.push_back(tape.grad(v));
  }

  GradCheckResult result;
  Rng rng(opts.seed);
  std::vector<Tensor> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const std::size_t n = inputs[k].numel();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), 0);
    if (opts.max_coords > 0 && n > opts.max_coords) {
      for (std::size_t i = 0; i < opts.max_coords; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.next_u64() % (n - i));
        std::swap(coords[i], coords[j]);
      }
      coords.resize(opts.max_coords);
    }
    std::vector<double> numeric(coords.size());
    double scale = opts.scale_floor;
    for (std::size_t c = 0; c < coords.size(); ++c) {
      const std::size_t i = coords[c];
      const double x0 = inputs[k][i];
      probe[k][i] = x0 + opts.step;
      const double fp = evaluate(fn, probe);
      probe[k][i] = x0 - opts.step;
      const double fm = evaluate(fn, probe);
      probe[k][i] = x0;
      numeric[c] = (fp - fm) / (2.0 * opts.step);
      scale = std::max({scale, std::abs(numeric[c]), std::abs(analytic[k][i])});
    }
    for (std::size_t c = 0; c < coords.size(); ++c) {
      const double err = std::abs(analytic[k][coords[c]] - numeric[c]) / scale;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_input = k;
        result.worst_index = coords[c];
      }
    }
    result.coords_checked += coords.size();
  }
  return result;
}

}  // namespace vg3s
