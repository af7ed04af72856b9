// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#include "vg3s/params.hpp"

#include <algorithm>
#include <cmath>

#include "vg3s/error.hpp"

namespace vg3s {

Tensor& ParamStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw ConfigError("duplicate parameter " + name);
  order_.push_back(name);
  return values_.emplace(name, std::move(value)).first->second;
}

Tensor& ParamStore::at(const std::string& name) {
  const auto it = values_.find(name);
  if (it == values_.end()) throw ConfigError("unknown parameter " + name);
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  const auto it = values_.find(name);
  if (it == values_.end()) throw ConfigError("unknown parameter " + name);
  return it->second;
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, t] : values_) n += t.numel();
  return n;
}

Bound::Bound(Tape& tape, const ParamStore& store, bool requires_grad) : tape_(&tape) {
  for (const std::string& name : store.names()) vars_.emplace(name, tape.leaf(store.at(name), requires_grad, name));
}

Var Bound::operator[](const std::string& name) const {
  const auto it = vars_.find(name);
  if (it == vars_.end()) throw ConfigError("unknown parameter " + name);
  return it->second;
}

Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (double& x : t.data()) x = rng.uniform(-bound, bound);
  return t;
}

}  // namespace vg3s
