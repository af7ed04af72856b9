// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "vg3s/pipeline.hpp"

namespace vg3s {

/// Linear warm-up from 0 at step 0 to the peak at step `warmup`, then cosine
/// decay reaching 0 at the final step (steps - 1).
double learning_rate(const OptimConfig& cfg, std::size_t step);

/// Parameters plus optimizer moments. Dropout masks are a pure function of
/// (seed, step), so these two counters are the whole random state.
struct TrainState {
  ParamStore params;
  ParamStore first_moment;
  ParamStore second_moment;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;

  bool operator==(const TrainState&) const = default;
};

TrainState init_train_state(const RunConfig& cfg);

struct StepLog {
  std::uint64_t step = 0;
  double loss = 0.0;
  double cross_entropy = 0.0;
  double lovasz = 0.0;
  double lr = 0.0;

  /// "step=... loss=... ce=... lovasz=... lr=..." with shortest round-trip numbers.
  std::string line() const;
};

/// One forward/backward/update. Throws NumericError naming the step and the
/// first non-finite tensor (an op output, the loss or a parameter gradient).
StepLog train_step(const RunConfig& cfg, const Dataset& data, TrainState& state);

/// Runs steps until state.step == cfg.optim.steps, calling `log` after each.
void train(const RunConfig& cfg, const Dataset& data, TrainState& state,
           const std::function<void(const StepLog&)>& log = {});

/// "VG3SCKP1", u64 seed, u64 step, u32 parameter count, then per parameter:
/// u32 name length, name, u32 rank, u64 dims, f64 values, f64 first moment,
/// f64 second moment. Little-endian.
void write_checkpoint(const TrainState& state, const std::string& path);
TrainState read_checkpoint(const std::string& path);

/// Throws ConfigError unless the checkpoint holds exactly the parameters
/// `cfg` builds, with the same shapes and seed.
void check_compatible(const TrainState& state, const RunConfig& cfg);

}  // namespace vg3s
