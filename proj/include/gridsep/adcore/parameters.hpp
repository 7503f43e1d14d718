// gridsep/adcore/parameters.hpp

// Copyright 2026 The gridsep Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <map>
#include <random>
#include <string>

#include "gridsep/adcore/tensor.hpp"

namespace gridsep::ad {

/// Named trainable tensors, iterated in lexicographic name order.
template <class S>
class ParameterSet {
 public:
  using Map = std::map<std::string, Tensor<S>>;

  /// Registers a parameter; names must be unique.
  Tensor<S> add(const std::string& name, Shape shape, std::vector<S> values) {
    if (params_.count(name)) throw AdError("duplicate parameter name: " + name);
    auto t = Tensor<S>::parameter(std::move(shape), std::move(values));
    params_.emplace(name, t);
    return t;
  }

  Tensor<S> add_uniform(const std::string& name, Shape shape, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<S> v(numel(shape));
    for (auto& x : v) x = static_cast<S>(dist(rng));
    return add(name, std::move(shape), std::move(v));
  }

  Tensor<S> add_constant(const std::string& name, Shape shape, S value) {
    std::vector<S> v(numel(shape), value);
    return add(name, std::move(shape), std::move(v));
  }

  const Tensor<S>& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw AdError("unknown parameter: " + name);
    return it->second;
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  std::size_t size() const { return params_.size(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : params_) n += t.numel();
    return n;
  }

  void zero_grad() {
    for (auto& [_, t] : params_) {
      auto copy = t;
      copy.zero_grad();
    }
  }

 private:
  Map params_;
};

}  // namespace gridsep::ad
