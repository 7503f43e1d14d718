// gridsep/data/synth.hpp

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

// Synthetic two-source mixtures: harmonic "voiced" sources and band-limited
// noise sources, mixing at a relative level, variance normalization and
// fixed-length segment sampling.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridsep/signal/stft.hpp"

namespace gridsep::data {

using signal::Waveform;

enum class SourceStyle { kVoiced, kNoiseBand };

inline std::string to_string(SourceStyle s) {
  return s == SourceStyle::kVoiced ? "voiced" : "noise_band";
}

inline SourceStyle parse_source_style(const std::string& s) {
  if (s == "voiced") return SourceStyle::kVoiced;
  if (s == "noise_band") return SourceStyle::kNoiseBand;
  throw std::invalid_argument("unknown source style '" + s + "' (voiced | noise_band)");
}

struct Utterance {
  std::string id;
  Waveform mixture;
  std::vector<Waveform> sources;
  std::uint64_t seed = 0;
  double snr_db = 0;

  std::size_t length() const { return mixture.size(); }
};

/// splitmix64 finalizer; used to derive independent sub-seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace detail {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline void peak_normalize(std::vector<double>& x, double peak) {
  double m = 0;
  for (double v : x) m = std::max(m, std::abs(v));
  if (m > 0)
    for (double& v : x) v *= peak / m;
}

/// Slow amplitude envelope with a seed-chosen syllable-like rate.
inline std::vector<double> envelope(std::mt19937_64& rng, std::size_t n, int sr) {
  const double rate = uniform(rng, 2.0, 5.0), phase = uniform(rng, 0, 2 * std::numbers::pi);
  const double depth = uniform(rng, 0.3, 0.6);
  std::vector<double> e(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    e[i] = 1.0 - depth * (0.5 + 0.5 * std::sin(2 * std::numbers::pi * rate * t + phase));
  }
  return e;
}

/// RBJ band-pass biquad (0 dB peak gain), applied in place.
inline void bandpass(std::vector<double>& x, double fc, double q, int sr) {
  const double w0 = 2 * std::numbers::pi * fc / sr;
  const double alpha = std::sin(w0) / (2 * q);
  const double a0 = 1 + alpha;
  const double b0 = alpha / a0, b2 = -alpha / a0;
  const double a1 = -2 * std::cos(w0) / a0, a2 = (1 - alpha) / a0;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (double& v : x) {
    const double y = b0 * v + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = v;
    y2 = y1;
    y1 = y;
    v = y;
  }
}

}  // namespace detail

/// Deterministic synthetic source, peak-normalized to 0.5.
///
/// voiced: 3-6 harmonics of a fundamental in [90, 300] Hz with vibrato, a
/// slow pitch glide and a syllabic amplitude envelope. noise_band: Gaussian
/// noise through two band-pass sections at a seed-chosen centre frequency.
inline Waveform synth_source(std::uint64_t seed, SourceStyle style, double duration_s,
                             int sample_rate = 8000) {
  if (!(duration_s >= 0.5)) throw std::invalid_argument("synth_source: duration must be >= 0.5 s");
  if (sample_rate <= 0) throw std::invalid_argument("synth_source: sample rate must be positive");
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  std::mt19937_64 rng(mix_seed(seed, 0x5eed));
  const double sr = sample_rate;
  const double two_pi = 2 * std::numbers::pi;
  std::vector<double> x(n, 0.0);
  if (style == SourceStyle::kVoiced) {
    const double f0 = detail::uniform(rng, 90.0, 300.0);
    const int harmonics = std::uniform_int_distribution<int>(3, 6)(rng);
    std::vector<double> amp(harmonics), ph(harmonics);
    for (int k = 0; k < harmonics; ++k) {
      amp[k] = detail::uniform(rng, 0.4, 1.0) / (k + 1);
      ph[k] = detail::uniform(rng, 0, two_pi);
    }
    const double vib_rate = detail::uniform(rng, 3.0, 7.0), vib_depth = detail::uniform(rng, 0.01, 0.03);
    const double vib_phase = detail::uniform(rng, 0, two_pi);
    const double glide_rate = detail::uniform(rng, 0.1, 0.5), glide_depth = detail::uniform(rng, 0.05, 0.15);
    const double glide_phase = detail::uniform(rng, 0, two_pi);
    const auto env = detail::envelope(rng, n, sample_rate);
    double phase = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / sr;
      const double f = f0 * (1 + vib_depth * std::sin(two_pi * vib_rate * t + vib_phase) +
                             glide_depth * std::sin(two_pi * glide_rate * t + glide_phase));
      double v = 0;
      for (int k = 0; k < harmonics; ++k)
        if ((k + 1) * f < 0.475 * sr) v += amp[k] * std::sin((k + 1) * phase + ph[k]);
      x[i] = env[i] * v;
      phase = std::fmod(phase + two_pi * f / sr, two_pi);
    }
  } else {
    const double fc = detail::uniform(rng, 300.0, 3000.0), q = detail::uniform(rng, 1.0, 4.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& v : x) v = gauss(rng);
    detail::bandpass(x, fc, q, sample_rate);
    detail::bandpass(x, fc, q, sample_rate);
    const auto env = detail::envelope(rng, n, sample_rate);
    for (std::size_t i = 0; i < n; ++i) x[i] *= env[i];
  }
  detail::peak_normalize(x, 0.5);
  return Waveform{std::move(x), sample_rate};
}

inline double energy(const std::vector<double>& x) {
  double e = 0;
  for (double v : x) e += v * v;
  return e;
}

/// Rescales s2 to sit `snr_db` below s1 and sums; sources are stored after
/// scaling, so mixture == s1 + s2 sample by sample.
inline Utterance make_mixture(const Waveform& s1, const Waveform& s2, double snr_db) {
  if (s1.size() != s2.size() || s1.sample_rate != s2.sample_rate)
    throw std::invalid_argument("make_mixture: sources differ in length or sample rate");
  const double e1 = energy(s1.samples), e2 = energy(s2.samples);
  if (!(e1 > 0) || !(e2 > 0)) throw std::invalid_argument("make_mixture: zero-energy source");
  const double g = std::sqrt(e1 / (e2 * std::pow(10.0, snr_db / 10.0)));
  Utterance u;
  u.snr_db = snr_db;
  u.sources = {s1, s2};
  for (double& v : u.sources[1].samples) v *= g;
  u.mixture = Waveform{std::vector<double>(s1.size()), s1.sample_rate};
  for (std::size_t i = 0; i < s1.size(); ++i)
    u.mixture.samples[i] = u.sources[0].samples[i] + u.sources[1].samples[i];
  return u;
}

namespace detail {
inline void resum(Utterance& u) {
  for (std::size_t i = 0; i < u.mixture.size(); ++i) {
    double s = 0;
    for (const auto& src : u.sources) s += src.samples[i];
    u.mixture.samples[i] = s;
  }
}
}  // namespace detail

/// Population standard deviation (mean removed).
inline double standard_deviation(const std::vector<double>& x) {
  if (x.empty()) return 0;
  double mean = 0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(x.size()));
}

/// Scales every channel by 1 / std(mixture); returns the factor used.
inline double normalize_variance(Utterance& u) {
  const double sd = standard_deviation(u.mixture.samples);
  if (!(sd > 0)) throw std::invalid_argument("normalize_variance: zero mixture");
  for (auto& src : u.sources)
    for (double& v : src.samples) v /= sd;
  detail::resum(u);
  return sd;
}

/// Uniform random `seconds`-long cut; shorter utterances are zero-padded on
/// the right.
inline Utterance sample_segment(const Utterance& u, double seconds, std::mt19937_64& rng) {
  const auto len = static_cast<std::size_t>(std::llround(seconds * u.mixture.sample_rate));
  Utterance out = u;
  std::size_t start = 0;
  if (u.length() > len)
    start = std::uniform_int_distribution<std::size_t>(0, u.length() - len)(rng);
  auto cut = [&](const Waveform& w) {
    Waveform r{std::vector<double>(len, 0.0), w.sample_rate};
    const std::size_t avail = std::min(len, w.size() - start);
    std::copy_n(w.samples.begin() + static_cast<std::ptrdiff_t>(start), avail, r.samples.begin());
    return r;
  };
  out.mixture = cut(u.mixture);
  for (std::size_t c = 0; c < u.sources.size(); ++c) out.sources[c] = cut(u.sources[c]);
  return out;
}

/// Peak ceiling applied to generated mixtures so they survive PCM16 storage.
inline constexpr double kMixturePeak = 0.9;

/// Styles of the two sources of a corpus utterance: one voiced source plus a
/// second that is voiced or band noise with equal odds, in random order.
inline std::vector<SourceStyle> corpus_styles(std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 0x57));
  const bool second_voiced = rng() & 1;
  const bool swap = rng() & 1;
  std::vector<SourceStyle> s{SourceStyle::kVoiced,
                             second_voiced ? SourceStyle::kVoiced : SourceStyle::kNoiseBand};
  if (swap) std::swap(s[0], s[1]);
  return s;
}

/// Regenerates a corpus utterance from its manifest fields.
inline Utterance make_utterance(const std::string& id, std::uint64_t seed, double snr_db,
                                double duration_s, int sample_rate = 8000) {
  const auto styles = corpus_styles(seed);
  const auto s1 = synth_source(mix_seed(seed, 1), styles[0], duration_s, sample_rate);
  const auto s2 = synth_source(mix_seed(seed, 2), styles[1], duration_s, sample_rate);
  Utterance u = make_mixture(s1, s2, snr_db);
  double peak = 0;
  for (double v : u.mixture.samples) peak = std::max(peak, std::abs(v));
  if (peak > kMixturePeak) {
    const double g = kMixturePeak / peak;
    for (auto& src : u.sources)
      for (double& v : src.samples) v *= g;
    detail::resum(u);
  }
  u.id = id;
  u.seed = seed;
  return u;
}

}  // namespace gridsep::data
