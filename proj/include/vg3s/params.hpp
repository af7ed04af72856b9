// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vg3s/autodiff.hpp"
#include "vg3s/rng.hpp"
#include "vg3s/tensor.hpp"

namespace vg3s {

/// Named trainable tensors in registration order.
class ParamStore {
 public:
  /// Registers a new tensor; throws ConfigError on a duplicate name.
  Tensor& add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return values_.count(name) != 0; }
  /// Throws ConfigError for unknown names.
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  const std::vector<std::string>& names() const noexcept { return order_; }
  std::size_t total_size() const;

  bool operator==(const ParamStore& other) const = default;

 private:
  std::vector<std::string> order_;
  std::map<std::string, Tensor> values_;
};

/// Parameters placed on one tape as leaves.
class Bound {
 public:
  Bound(Tape& tape, const ParamStore& store, bool requires_grad);
  Bound(Tape& tape, std::map<std::string, Var> vars) : tape_(&tape), vars_(std::move(vars)) {}

  Var operator[](const std::string& name) const;
  Tape& tape() const noexcept { return *tape_; }
  const std::map<std::string, Var>& vars() const noexcept { return vars_; }

 private:
  Tape* tape_;
  std::map<std::string, Var> vars_;
};

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng);

}  // namespace vg3s
