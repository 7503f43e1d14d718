// gridsep/signal/stft.hpp

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

// Square-root-Hann STFT / iSTFT as differentiable tensor ops.
//
// Framing: the signal is zero-padded by (win - hop) samples on both ends and
// then on the right up to a whole number of frames, so every input sample is
// covered by win/hop frames. Frame t spans padded samples
// [t*hop, t*hop + win). Spectrograms are tensors [2, T, F] holding the real
// and imaginary planes.

#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridsep/adcore/ops.hpp"

namespace gridsep::signal {

using ad::Tensor;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 8000;

  std::size_t size() const { return samples.size(); }
};

struct StftConfig {
  int sample_rate = 8000;
  std::size_t win_length = 256;  // 32 ms at 8 kHz
  std::size_t hop = 64;          // 8 ms
  std::size_t n_dft = 256;

  std::size_t n_freq() const { return n_dft / 2 + 1; }
  std::size_t pad() const { return win_length - hop; }

  void validate() const {
    if (win_length == 0 || hop == 0 || n_dft == 0)
      throw std::invalid_argument("stft: window, hop and DFT size must be positive");
    if (hop > win_length || win_length % hop != 0)
      throw std::invalid_argument("stft: hop must divide the window length");
    if (n_dft < win_length || n_dft % 2 != 0)
      throw std::invalid_argument("stft: n_dft must be even and >= window length");
  }

  /// Number of frames for an N-sample signal.
  std::size_t frame_count(std::size_t n) const {
    const std::size_t span = n + 2 * pad();
    return (span - win_length + hop - 1) / hop + 1;
  }

  /// Largest signal length that `frames` frames cover.
  std::size_t max_length(std::size_t frames) const {
    const std::size_t total = (frames - 1) * hop + win_length;
    return total > 2 * pad() ? total - 2 * pad() : 0;
  }

  /// sqrt(0.5 - 0.5 cos(2 pi k / win)), k = 0 .. win-1.
  std::vector<double> window() const {
    std::vector<double> w(win_length);
    for (std::size_t k = 0; k < win_length; ++k)
      w[k] = std::sqrt(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) /
                                            static_cast<double>(win_length)));
    return w;
  }
};

/// Precomputed windowed DFT bases for one configuration.
template <class S>
class StftPlan {
 public:
  explicit StftPlan(StftConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t w = cfg_.win_length, f = cfg_.n_freq(), nd = cfg_.n_dft;
    const auto win = cfg_.window();
    analysis_ = std::make_shared<ad::MatR<S>>(w, 2 * f);
    synthesis_ = std::make_shared<ad::MatR<S>>(2 * f, w);
    for (std::size_t k = 0; k < f; ++k) {
      const double weight = (k == 0 || 2 * k == nd) ? 1.0 : 2.0;
      for (std::size_t n = 0; n < w; ++n) {
        const double ang = 2.0 * std::numbers::pi * static_cast<double>((k * n) % nd) /
                           static_cast<double>(nd);
        (*analysis_)(n, k) = static_cast<S>(win[n] * std::cos(ang));
        (*analysis_)(n, f + k) = static_cast<S>(-win[n] * std::sin(ang));
        (*synthesis_)(k, n) = static_cast<S>(weight * std::cos(ang) * win[n] / nd);
        (*synthesis_)(f + k, n) = static_cast<S>(-weight * std::sin(ang) * win[n] / nd);
      }
    }
    for (double v : win) window_energy_ += v * v;
  }

  const StftConfig& config() const { return cfg_; }

  /// x [N] -> [2, T, F].
  Tensor<S> analyze(const Tensor<S>& x) const {
    if (x.rank() != 1 || x.numel() == 0) throw ad::AdError("stft: expected a non-empty 1-D signal");
    const std::size_t n = x.numel(), w = cfg_.win_length, hop = cfg_.hop, f = cfg_.n_freq();
    const std::size_t frames = cfg_.frame_count(n), pad = cfg_.pad();
    ad::MatR<S> fr = ad::MatR<S>::Zero(frames, w);
    const auto xv = x.data();
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t k = 0; k < w; ++k) {
        const std::size_t p = t * hop + k;
        if (p >= pad && p - pad < n) fr(t, k) = xv[p - pad];
      }
    ad::MatR<S> spec = fr * *analysis_;  // [T, 2F]
    Tensor<S> out(ad::Shape{2, frames, f});
    auto o = out.mutable_data();
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t k = 0; k < f; ++k) {
        o[t * f + k] = spec(t, k);
        o[frames * f + t * f + k] = spec(t, f + k);
      }
    if (ad::Tape* tape = ad::detail::recording_tape({&x})) {
      ad::detail::mark_output(out, *tape);
      tape->record("stft", [xn = x.node(), on = out.node(), basis = analysis_, n, w, hop, f,
                            frames, pad] {
        if (on->grad.empty() || !xn->requires_grad) return;
        ad::MatR<S> g(frames, 2 * f);
        for (std::size_t t = 0; t < frames; ++t)
          for (std::size_t k = 0; k < f; ++k) {
            g(t, k) = on->grad[t * f + k];
            g(t, f + k) = on->grad[frames * f + t * f + k];
          }
        ad::MatR<S> dfr = g * basis->transpose();
        auto& gx = xn->ensure_grad();
        for (std::size_t t = 0; t < frames; ++t)
          for (std::size_t k = 0; k < w; ++k) {
            const std::size_t p = t * hop + k;
            if (p >= pad && p - pad < n) gx[p - pad] += dfr(t, k);
          }
      });
    }
    return out;
  }

  /// spec [2, T, F] -> [length]: inverse DFT, synthesis window, overlap-add,
  /// division by the summed squared-window envelope.
  Tensor<S> synthesize(const Tensor<S>& spec, std::size_t length) const {
    const std::size_t f = cfg_.n_freq(), w = cfg_.win_length, hop = cfg_.hop, pad = cfg_.pad();
    if (spec.rank() != 3 || spec.dim(0) != 2 || spec.dim(2) != f)
      throw ad::AdError("istft: expected spectrogram [2, T, " + std::to_string(f) + "], got " +
                        ad::to_string(spec.shape()));
    const std::size_t frames = spec.dim(1);
    if (frames == 0 || length == 0 || length > cfg_.max_length(frames))
      throw ad::AdError("istft: " + std::to_string(frames) + " frames cannot cover " +
                        std::to_string(length) + " samples");
    auto inv_env = std::make_shared<std::vector<S>>(length);
    {
      const auto win = cfg_.window();
      std::vector<double> env((frames - 1) * hop + w, 0.0);
      for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t k = 0; k < w; ++k) env[t * hop + k] += win[k] * win[k];
      for (std::size_t i = 0; i < length; ++i) (*inv_env)[i] = static_cast<S>(1.0 / env[i + pad]);
    }
    ad::MatR<S> g(frames, 2 * f);
    const auto sv = spec.data();
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t k = 0; k < f; ++k) {
        g(t, k) = sv[t * f + k];
        g(t, f + k) = sv[frames * f + t * f + k];
      }
    ad::MatR<S> fr = g * *synthesis_;  // [T, W]
    Tensor<S> out(ad::Shape{length});
    auto o = out.mutable_data();
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t k = 0; k < w; ++k) {
        const std::size_t p = t * hop + k;
        if (p >= pad && p - pad < length) o[p - pad] += fr(t, k);
      }
    for (std::size_t i = 0; i < length; ++i) o[i] *= (*inv_env)[i];

    if (ad::Tape* tape = ad::detail::recording_tape({&spec})) {
      ad::detail::mark_output(out, *tape);
      tape->record("istft", [sn = spec.node(), on = out.node(), basis = synthesis_, inv_env, f,
                             w, hop, pad, frames, length] {
        if (on->grad.empty() || !sn->requires_grad) return;
        ad::MatR<S> dfr = ad::MatR<S>::Zero(frames, w);
        for (std::size_t t = 0; t < frames; ++t)
          for (std::size_t k = 0; k < w; ++k) {
            const std::size_t p = t * hop + k;
            if (p >= pad && p - pad < length)
              dfr(t, k) = on->grad[p - pad] * (*inv_env)[p - pad];
          }
        ad::MatR<S> dg = dfr * basis->transpose();
        auto& gs = sn->ensure_grad();
        for (std::size_t t = 0; t < frames; ++t)
          for (std::size_t k = 0; k < f; ++k) {
            gs[t * f + k] += dg(t, k);
            gs[frames * f + t * f + k] += dg(t, f + k);
          }
      });
    }
    return out;
  }

  /// Sum of squared analysis-window values; the OLA gain is this over hop.
  double window_energy() const { return window_energy_; }

 private:
  StftConfig cfg_;
  std::shared_ptr<ad::MatR<S>> analysis_;
  std::shared_ptr<ad::MatR<S>> synthesis_;
  double window_energy_ = 0;
};

template <class S>
Tensor<S> stft(const Tensor<S>& x, const StftConfig& cfg) {
  return StftPlan<S>(cfg).analyze(x);
}

template <class S>
Tensor<S> istft(const Tensor<S>& spec, const StftConfig& cfg, std::size_t length) {
  return StftPlan<S>(cfg).synthesize(spec, length);
}

inline Tensor<double> stft(const Waveform& x, const StftConfig& cfg) {
  if (x.samples.empty()) throw std::invalid_argument("stft: empty waveform");
  return stft(Tensor<double>(ad::Shape{x.size()}, x.samples), cfg);
}

inline Waveform istft_waveform(const Tensor<double>& spec, const StftConfig& cfg,
                               std::size_t length) {
  auto y = istft(spec, cfg, length);
  return Waveform{y.values(), cfg.sample_rate};
}

}  // namespace gridsep::signal
