// gridsep/train/optim.hpp

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

// Gradient clipping, Adam, and the plateau learning-rate schedule.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridsep/adcore/parameters.hpp"

namespace gridsep::train {

/// Global L2 norm over every populated gradient.
template <class S>
double global_grad_norm(const ad::ParameterSet<S>& params) {
  double sq = 0;
  for (const auto& [_, t] : params)
    for (S g : t.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(sq);
}

/// Scales all gradients by max_norm / g when the global norm g exceeds
/// max_norm. Returns g (before clipping).
template <class S>
double clip_global_norm(ad::ParameterSet<S>& params, double max_norm = 1.0) {
  const double g = global_grad_norm(params);
  if (g > max_norm) {
    const double k = max_norm / g;
    for (const auto& [_, t] : params) {
      auto copy = t;
      if (!copy.has_grad()) continue;
      for (S& v : copy.mutable_grad()) v = static_cast<S>(v * k);
    }
  }
  return g;
}

template <class S>
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::uint64_t step = 0;
  std::map<std::string, std::vector<S>> m, v;
};

/// One bias-corrected Adam update over every parameter. Parameters without
/// a gradient are treated as having a zero gradient.
template <class S>
void adam_step(ad::ParameterSet<S>& params, AdamState<S>& st) {
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (const auto& [name, t] : params) {
    auto p = t;
    const std::size_t n = p.numel();
    auto& m = st.m[name];
    auto& v = st.v[name];
    if (m.empty()) m.assign(n, S(0));
    if (v.empty()) v.assign(n, S(0));
    if (m.size() != n || v.size() != n)
      throw std::invalid_argument("adam: moment shape mismatch for " + name);
    const auto g = p.grad();
    auto w = p.mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = g.empty() ? 0.0 : static_cast<double>(g[i]);
      const double mi = st.beta1 * m[i] + (1 - st.beta1) * gi;
      const double vi = st.beta2 * v[i] + (1 - st.beta2) * gi * gi;
      m[i] = static_cast<S>(mi);
      v[i] = static_cast<S>(vi);
      w[i] = static_cast<S>(w[i] - st.lr * (mi / c1) / (std::sqrt(vi / c2) + st.eps));
    }
  }
}

struct ScheduleState {
  double lr = 1e-3;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t epochs_since_improvement = 0;
};

/// Records one validation loss: improvement (below best - 1e-6) resets the
/// stall counter; `patience` stalled epochs in a row halve the rate.
inline void schedule_update(ScheduleState& st, double val_loss, std::size_t patience = 3) {
  if (val_loss < st.best_val_loss - 1e-6) {
    st.best_val_loss = val_loss;
    st.epochs_since_improvement = 0;
    return;
  }
  if (++st.epochs_since_improvement >= patience) {
    st.lr *= 0.5;
    st.epochs_since_improvement = 0;
  }
}

}  // namespace gridsep::train
