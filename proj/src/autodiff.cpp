// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#include "vg3s/autodiff.hpp"

#include <stdexcept>

#include "vg3s/error.hpp"

namespace vg3s {

const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("value() on an empty Var");
  return tape_->value(*this);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(*this); }

void Tape::check_owned(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw std::invalid_argument("variable is not recorded on this tape");
  }
}

Var Tape::leaf(Tensor value, bool requires_grad, std::string name) {
  if (!value.all_finite()) throw NumericError("non-finite value in leaf '" + name + "'");
  Node node;
  node.op = std::move(name);
  node.value = std::move(value);
  node.requires_grad = requires_grad && grad_enabled_;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string op, Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(op), std::move(value), std::vector<Var>(inputs), std::move(backward));
}

Var Tape::record(std::string op, Tensor value, const std::vector<Var>& inputs, Backward backward) {
  if (!value.all_finite()) {
    throw NumericError("non-finite value produced by op '" + op + "' (record " + std::to_string(nodes_.size()) +
                       ")");
  }
  bool any = false;
  for (Var in : inputs) {
    check_owned(in);
    any = any || nodes_[in.id_].requires_grad;
  }
  Node node;
  node.op = std::move(op);
  node.value = std::move(value);
  node.requires_grad = any && grad_enabled_;
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(Var v) const {
  check_owned(v);
  return nodes_[v.id_].value;
}

bool Tape::requires_grad(Var v) const {
  check_owned(v);
  return nodes_[v.id_].requires_grad;
}

const std::string& Tape::op_name(Var v) const {
  check_owned(v);
  return nodes_[v.id_].op;
}

Tensor* Tape::grad_slot(Var v) {
  check_owned(v);
  Node& node = nodes_[v.id_];
  if (!node.requires_grad) return nullptr;
  if (!node.has_grad) {
    node.grad = Tensor(node.value.shape(), 0.0);
    node.has_grad = true;
  }
  return &node.grad;
}

void Tape::backward(Var loss) {
  check_owned(loss);
  if (nodes_[loss.id_].value.numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(nodes_[loss.id_].value.shape()));
  }
  for (Node& node : nodes_) {
    node.has_grad = false;
    node.grad = Tensor();
  }
  Node& root = nodes_[loss.id_];
  root.grad = Tensor(root.value.shape(), 1.0);
  root.has_grad = true;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad || !node.backward) continue;
    // Inputs always precede their op, so the rule never touches node.grad.
    node.backward(node.grad, node.value);
  }
}

const Tensor& Tape::grad(Var v) {
  check_owned(v);
  Node& node = nodes_[v.id_];
  if (!node.requires_grad) {
    throw std::invalid_argument("gradient requested for detached variable '" + node.op + "'");
  }
  if (!node.has_grad) {
    node.grad = Tensor(node.value.shape(), 0.0);
    node.has_grad = true;
  }
  return node.grad;
}

}  // namespace vg3s
