// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "vg3s/tensor.hpp"

namespace vg3s {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode gradient tape. Every op application appends one record holding
/// its output value and a vector-Jacobian-product rule; backward() replays the
/// records in exact reverse order and accumulates gradients additively.
///
/// One tape belongs to one forward/backward pass and is not thread-safe.
class Tape {
 public:
  /// Receives the gradient flowing into the op's output and the output value.
  using Backward = std::function<void(const Tensor& out_grad, const Tensor& out_value)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }

  Var leaf(Tensor value, bool requires_grad, std::string name = "leaf");
  Var constant(Tensor value) { return leaf(std::move(value), false, "constant"); }

  /// Appends an op record. The record requires grad iff any input does; the
  /// backward rule is dropped otherwise. Throws NumericError when the output
  /// holds a non-finite value.
  Var record(std::string op, Tensor value, std::initializer_list<Var> inputs, Backward backward);
  Var record(std::string op, Tensor value, const std::vector<Var>& inputs, Backward backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;

  /// Gradient buffer for accumulation inside a backward rule; null when the
  /// input does not require grad.
  Tensor* grad_slot(Var v);

  /// Runs the reverse pass from a one-element loss. d(loss)/d(loss) = 1.
  void backward(Var loss);

  /// Gradient of the last backward() loss w.r.t. `v`. Throws for detached vars.
  const Tensor& grad(Var v);

  std::size_t size() const noexcept { return nodes_.size(); }
  const std::string& op_name(Var v) const;

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };

  void check_owned(Var v) const;

  bool grad_enabled_;
  std::deque<Node> nodes_;  // stable references across appends
};

}  // namespace vg3s
