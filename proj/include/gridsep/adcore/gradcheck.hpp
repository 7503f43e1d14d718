// gridsep/adcore/gradcheck.hpp

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

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "gridsep/adcore/tensor.hpp"

namespace gridsep::ad {

/// Maximum relative error between reverse-mode gradients of a scalar
/// function and central finite differences, over every coordinate of every
/// input. Relative error is |a - n| / max(|a|, |n|, floor), where floor is
/// 1e-4 of the largest finite-difference magnitude (at least 1e-8). The floor
/// keeps coordinates whose true gradient is zero (e.g. biases that a softmax
/// cancels) from reporting rounding noise as a relative error.
inline double grad_check(const std::function<Tensor<double>()>& f,
                         std::vector<Tensor<double>> inputs, double step = 1e-5) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor<double> loss = f();
    if (loss.numel() != 1) throw AdError("grad_check: function must be scalar-valued");
    tape.backward(loss);
  }
  std::vector<double> analytic, numeric;
  {
    NoGradScope no_grad;
    for (auto& t : inputs) {
      if (t.grad().empty())
        analytic.insert(analytic.end(), t.numel(), 0.0);
      else
        analytic.insert(analytic.end(), t.grad().begin(), t.grad().end());
      auto values = t.mutable_data();
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + step;
        const double up = f().item();
        values[i] = saved - step;
        const double down = f().item();
        values[i] = saved;
        numeric.push_back((up - down) / (2 * step));
      }
    }
  }
  double scale = 0;
  for (double n : numeric) scale = std::max(scale, std::abs(n));
  const double floor = std::max(1e-4 * scale, 1e-8);
  double worst = 0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

/// Tensor with entries uniform in [lo, hi].
template <class S = double>
Tensor<S> random_tensor(Shape shape, std::mt19937_64& rng, S lo = S(-1), S hi = S(1)) {
  std::uniform_real_distribution<S> dist(lo, hi);
  std::vector<S> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor<S>(std::move(shape), std::move(v));
}

}  // namespace gridsep::ad
