// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#include "vg3s/train.hpp"

#include <charconv>
#include <cmath>
#include <numbers>

#include "binio.hpp"
#include "vg3s/error.hpp"

namespace vg3s {
namespace {

constexpr std::string_view kMagic = "VG3SCKP1";

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

ParamStore zeros_like(const ParamStore& p) {
  ParamStore out;
  for (const std::string& n : p.names()) out.add(n, Tensor(p.at(n).shape()));
  return out;
}

}  // namespace

double learning_rate(const OptimConfig& cfg, std::size_t step) {
  if (step < cfg.warmup) return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup);
  const std::size_t last = cfg.steps - 1;
  if (step >= last || last <= cfg.warmup) return step == cfg.warmup && last == cfg.warmup ? cfg.peak_lr : 0.0;
  const double t = static_cast<double>(step - cfg.warmup) / static_cast<double>(last - cfg.warmup);
  return 0.5 * cfg.peak_lr * (1.0 + std::cos(std::numbers::pi * t));
}

TrainState init_train_state(const RunConfig& cfg) {
  TrainState s;
  s.params = init_model(cfg);
  s.first_moment = zeros_like(s.params);
  s.second_moment = zeros_like(s.params);
  s.seed = cfg.seed;
  return s;
}

std::string StepLog::line() const {
  return "step=" + std::to_string(step) + " loss=" + fmt(loss) + " ce=" + fmt(cross_entropy) +
         " lovasz=" + fmt(lovasz) + " lr=" + fmt(lr);
}

namespace {

StepLog train_step_impl(const RunConfig& cfg, const Dataset& data, TrainState& state) {
  StepLog log;
  log.step = state.step;
  log.lr = learning_rate(cfg.optim, state.step);

  Tape tape;
  const Bound p(tape, state.params, true);
  const Prediction pred = run_model(p, data, cfg, true, state.step);
  const LossTerms loss = compute_loss(pred.probs, data.gt, cfg.loss);
  log.loss = loss.total.value().item();
  log.cross_entropy = loss.cross_entropy;
  log.lovasz = loss.lovasz;
  if (!std::isfinite(log.loss)) throw NumericError("loss is not finite");
  tape.backward(loss.total);

  const OptimConfig& o = cfg.optim;
  const double t = static_cast<double>(state.step + 1);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  // validate every gradient first so a failed step leaves the state untouched
  for (const std::string& name : state.params.names()) {
    if (!tape.grad(p[name]).all_finite()) throw NumericError("gradient of " + name + " is not finite");
  }
  for (const std::string& name : state.params.names()) {
    const Tensor& g = tape.grad(p[name]);
    Tensor& w = state.params.at(name);
    Tensor& m = state.first_moment.at(name);
    Tensor& v = state.second_moment.at(name);
    for (std::size_t i = 0; i < w.numel(); ++i) {
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
      w[i] -= log.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + o.eps);
    }
  }
  ++state.step;
  return log;
}

}  // namespace

StepLog train_step(const RunConfig& cfg, const Dataset& data, TrainState& state) {
  try {
    return train_step_impl(cfg, data, state);
  } catch (const NumericError& e) {
    throw NumericError("step " + std::to_string(state.step) + ": " + e.what());
  }
}

void train(const RunConfig& cfg, const Dataset& data, TrainState& state,
           const std::function<void(const StepLog&)>& log) {
  while (state.step < cfg.optim.steps) {
    const StepLog l = train_step(cfg, data, state);
    if (log) log(l);
  }
}

void write_checkpoint(const TrainState& state, const std::string& path) {
  binio::Writer w;
  w.bytes(kMagic);
  w.u64(state.seed);
  w.u64(state.step);
  w.u32(static_cast<std::uint32_t>(state.params.names().size()));
  for (const std::string& name : state.params.names()) {
    const Tensor& t = state.params.at(name);
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    for (const ParamStore* s : {&state.params, &state.first_moment, &state.second_moment}) {
      for (double x : s->at(name).data()) w.f64(x);
    }
  }
  w.save(path);
}

TrainState read_checkpoint(const std::string& path) {
  const std::vector<char> buf = binio::load(path);
  binio::Reader r(buf, path);
  binio::expect_magic(r, kMagic);
  TrainState s;
  s.seed = r.u64();
  s.step = r.u64();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32();
    if (len > r.remaining()) throw FormatError(FormatErrorKind::kTruncated, path + ": truncated parameter name");
    const std::string name = r.bytes(len);
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError(FormatErrorKind::kMalformed, path + ": parameter " + name + " has rank > 8");
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = r.u64();
      if (!binio::mul_checked(n, d, n) || n > (std::size_t{1} << 40)) {
        throw FormatError(FormatErrorKind::kDimensionOverflow, path + ": parameter " + name + " is too large");
      }
    }
    if (r.remaining() < 3 * 8 * n) {
      throw FormatError(FormatErrorKind::kTruncated, path + ": truncated values for parameter " + name);
    }
    for (ParamStore* st : {&s.params, &s.first_moment, &s.second_moment}) {
      Tensor t(shape);
      for (double& x : t.data()) x = r.f64();
      try {
        st->add(name, std::move(t));
      } catch (const ConfigError&) {
        throw FormatError(FormatErrorKind::kMalformed, path + ": parameter " + name + " appears twice");
      }
    }
  }
  if (r.remaining() != 0) {
    throw FormatError(FormatErrorKind::kMalformed, path + ": " + std::to_string(r.remaining()) + " trailing bytes");
  }
  return s;
}

void check_compatible(const TrainState& state, const RunConfig& cfg) {
  const ParamStore want = init_model(cfg);
  if (state.seed != cfg.seed) {
    throw ConfigError("checkpoint was trained with seed " + std::to_string(state.seed) + " but the run uses seed " +
                      std::to_string(cfg.seed));
  }
  if (state.params.names() != want.names()) {
    throw ConfigError("checkpoint parameters do not match the configured model (" +
                      std::to_string(state.params.names().size()) + " stored, " +
                      std::to_string(want.names().size()) + " expected)");
  }
  for (const std::string& name : want.names()) {
    if (state.params.at(name).shape() != want.at(name).shape()) {
      throw ConfigError("checkpoint parameter " + name + " has shape " + shape_str(state.params.at(name).shape()) +
                        " but the config builds " + shape_str(want.at(name).shape()));
    }
  }
}

}  // namespace vg3s
