// tests/test_signal.cpp

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

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "gridsep/signal/stft.hpp"
#include "test_util.hpp"

namespace gridsep {
namespace {

using namespace gridsep::testing;
using signal::StftConfig;
using signal::StftPlan;

constexpr std::size_t kF = 129;

double mag(const Td& spec, std::size_t t, std::size_t k) {
  const std::size_t frames = spec.dim(1);
  return std::hypot(spec[t * kF + k], spec[frames * kF + t * kF + k]);
}

TEST(StftConfig, DefaultsAndWindow) {
  StftConfig c;
  EXPECT_EQ(c.n_freq(), kF);
  EXPECT_EQ(c.win_length % c.hop, 0u);
  const auto w = c.window();
  for (std::size_t k = 0; k < w.size(); ++k)
    EXPECT_NEAR(w[k], std::sqrt(0.5 - 0.5 * std::cos(2 * std::numbers::pi * k / 256.0)), 1e-15);
}

TEST(StftConfig, RejectsHopThatDoesNotDivideWindow) {
  StftConfig c;
  c.hop = 48;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Stft, ShapeFollowsFrameCount) {
  StftPlan<double> plan(StftConfig{});
  for (std::size_t n : {1u, 63u, 64u, 65u, 8000u}) {
    auto y = plan.analyze(Td(Shape{n}, 0.1));
    EXPECT_EQ(y.shape(), (Shape{2, StftConfig{}.frame_count(n), kF}));
    EXPECT_GE(StftConfig{}.max_length(y.dim(1)), n);
  }
}

TEST(Stft, ZeroInputGivesZeroSpectrogram) {
  for (std::size_t n : {1u, 100u, 777u}) {
    auto y = signal::stft(signal::Waveform{std::vector<double>(n, 0.0)}, StftConfig{});
    for (double v : y.data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Stft, RejectsEmptyWaveform) {
  EXPECT_THROW(signal::stft(signal::Waveform{}, StftConfig{}), std::invalid_argument);
}

// A bin-centred cosine against a direct DFT of each windowed frame. The
// square-root Hann window leaks 1/(4m^2 - 1) of the peak into the bin m
// away, so 100x dominance holds from six bins out.
TEST(Stft, BinCenteredCosineMatchesDirectDft) {
  // Bin 8 of a 256-point DFT at 8 kHz is 250 Hz.
  const std::size_t n = 4000, hop = 64, pad = 192;
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = std::cos(2 * std::numbers::pi * 8.0 * i / 256.0);
  const StftConfig cfg;
  const auto win = cfg.window();
  auto y = signal::stft(signal::Waveform{x}, cfg);
  const std::size_t frames = y.dim(1);
  for (std::size_t t = 4; t + 4 < frames; ++t) {
    for (std::size_t k = 0; k < kF; ++k) {
      std::complex<double> acc = 0;
      for (std::size_t m = 0; m < 256; ++m) {
        const std::size_t p = t * hop + m;
        const double v = (p >= pad && p - pad < n) ? x[p - pad] : 0.0;
        acc += win[m] * v * std::polar(1.0, -2 * std::numbers::pi * double(k * m) / 256.0);
      }
      EXPECT_NEAR(mag(y, t, k), std::abs(acc), 1e-9);
    }
    const double peak = mag(y, t, 8);
    for (std::size_t k = 0; k < kF; ++k) {
      const std::size_t m = k > 8 ? k - 8 : 8 - k;
      if (m >= 6) EXPECT_GE(peak, 100 * mag(y, t, k)) << "frame " << t << " bin " << k;
      if (m >= 1) EXPECT_GT(peak, mag(y, t, k));
    }
  }
}

TEST(Stft, Linearity) {
  std::mt19937_64 rng(1);
  StftPlan<double> plan(StftConfig{});
  auto a = random(Shape{1000}, rng), b = random(Shape{1000}, rng);
  auto sum = plan.analyze(ad::add(a, b));
  auto parts = ad::add(plan.analyze(a), plan.analyze(b));
  EXPECT_LT(max_abs_diff(sum.data(), parts.data()), 1e-10);
}

TEST(Istft, RoundTrip) {
  std::mt19937_64 rng(2);
  StftPlan<double> plan(StftConfig{});
  for (std::size_t n : {1u, 64u, 255u, 8000u, 8001u, 12345u}) {
    auto x = random(Shape{n}, rng);
    EXPECT_LT(max_abs_diff(plan.synthesize(plan.analyze(x), n).data(), x.data()), 1e-6) << n;
  }
}

TEST(Istft, ZeroAndScaling) {
  std::mt19937_64 rng(3);
  StftPlan<double> plan(StftConfig{});
  auto z = plan.synthesize(Td(Shape{2, 20, kF}), 500);
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
  auto s = random(Shape{2, 20, kF}, rng);
  auto y1 = plan.synthesize(s, 500), y2 = plan.synthesize(ad::scale(s, 2.0), 500);
  for (std::size_t i = 0; i < 500; ++i) EXPECT_NEAR(y2[i], 2 * y1[i], 1e-12);
}

TEST(Istft, RejectsLengthBeyondCoverage) {
  StftPlan<double> plan(StftConfig{});
  const std::size_t frames = 10;
  const std::size_t max_len = StftConfig{}.max_length(frames);
  EXPECT_NO_THROW(plan.synthesize(Td(Shape{2, frames, kF}), max_len));
  EXPECT_THROW(plan.synthesize(Td(Shape{2, frames, kF}), max_len + 1), ad::AdError);
}

// Energy from one-sided spectra, divided by the overlap-add gain, matches the
// time-domain energy.
TEST(Stft, ParsevalSanity) {
  std::mt19937_64 rng(4);
  StftPlan<double> plan(StftConfig{});
  for (int trial = 0; trial < 5; ++trial) {
    auto x = random(Shape{3000}, rng);
    auto y = plan.analyze(x);
    double spectral = 0;
    for (std::size_t t = 0; t < y.dim(1); ++t)
      for (std::size_t k = 0; k < kF; ++k) {
        const double w = (k == 0 || k == kF - 1) ? 1.0 : 2.0;
        spectral += w * mag(y, t, k) * mag(y, t, k) / 256.0;
      }
    spectral /= plan.window_energy() / 64.0;
    double energy = 0;
    for (double v : x.data()) energy += v * v;
    EXPECT_NEAR(spectral / energy, 1.0, 0.01);
  }
}

TEST(Stft, DifferentiableRoundTrip) {
  std::mt19937_64 rng(5);
  StftConfig c;
  c.win_length = 16;
  c.hop = 4;
  c.n_dft = 16;
  StftPlan<double> plan(c);
  auto x = random(Shape{41}, rng), w = random(Shape{41}, rng);
  EXPECT_LT(grad_error([&] { return ad::dot(plan.synthesize(ad::square(plan.analyze(x)), 41), w); }, {x}), 1e-4);
}

}  // namespace
}  // namespace gridsep
