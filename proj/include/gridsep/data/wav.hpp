// gridsep/data/wav.hpp

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

// RIFF/WAVE PCM 16-bit mono reader and writer.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridsep/signal/stft.hpp"

namespace gridsep::data {

using signal::Waveform;

class WavError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sample in [-1, 1) to int16, rounding half away from zero after clamping.
inline std::int16_t quantize_pcm16(double x) {
  constexpr double kMax = 32767.0 / 32768.0;
  const double c = std::clamp(x, -1.0, kMax);
  return static_cast<std::int16_t>(std::round(c * 32768.0));
}

inline double dequantize_pcm16(std::int16_t v) { return static_cast<double>(v) / 32768.0; }

namespace detail {

inline void put_u32(std::vector<char>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::vector<char>& b, std::uint16_t v) {
  b.push_back(static_cast<char>(v & 0xff));
  b.push_back(static_cast<char>(v >> 8));
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}
inline std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

}  // namespace detail

inline std::vector<char> encode_wav(const Waveform& w) {
  if (w.sample_rate <= 0) throw WavError("wav: sample rate must be positive");
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  std::vector<char> b;
  b.reserve(44 + data_bytes);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  detail::put_u32(b, 36 + data_bytes);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  detail::put_u32(b, 16);
  detail::put_u16(b, 1);  // PCM
  detail::put_u16(b, 1);  // mono
  detail::put_u32(b, static_cast<std::uint32_t>(w.sample_rate));
  detail::put_u32(b, static_cast<std::uint32_t>(w.sample_rate) * 2);
  detail::put_u16(b, 2);
  detail::put_u16(b, 16);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  detail::put_u32(b, data_bytes);
  for (double x : w.samples) detail::put_u16(b, static_cast<std::uint16_t>(quantize_pcm16(x)));
  return b;
}

inline Waveform decode_wav(const std::vector<char>& bytes, const std::string& what = "wav") {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw WavError(what + ": not a RIFF/WAVE file (bad magic bytes)");
  std::size_t pos = 12;
  bool have_fmt = false;
  Waveform w;
  while (pos + 8 <= n) {
    const std::uint32_t size = detail::get_u32(p + pos + 4);
    const unsigned char* body = p + pos + 8;
    if (pos + 8 + size > n) throw WavError(what + ": truncated chunk");
    if (std::memcmp(p + pos, "fmt ", 4) == 0) {
      if (size < 16) throw WavError(what + ": fmt chunk too short");
      const std::uint16_t format = detail::get_u16(body);
      const std::uint16_t channels = detail::get_u16(body + 2);
      const std::uint16_t bits = detail::get_u16(body + 14);
      if (format != 1) throw WavError(what + ": only PCM (format 1) is supported, got format " +
                                      std::to_string(format));
      if (channels != 1)
        throw WavError(what + ": only mono is supported, got " + std::to_string(channels) +
                       " channels");
      if (bits != 16)
        throw WavError(what + ": only 16-bit samples are supported, got " +
                       std::to_string(bits) + " bits");
      w.sample_rate = static_cast<int>(detail::get_u32(body + 4));
      have_fmt = true;
    } else if (std::memcmp(p + pos, "data", 4) == 0) {
      if (!have_fmt) throw WavError(what + ": data chunk precedes fmt chunk");
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i)
        w.samples[i] = dequantize_pcm16(static_cast<std::int16_t>(detail::get_u16(body + 2 * i)));
      return w;
    }
    pos += 8 + size + (size & 1);
  }
  throw WavError(what + (have_fmt ? ": missing data chunk" : ": missing fmt chunk"));
}

inline void wav_write(const std::string& path, const Waveform& w) {
  const auto bytes = encode_wav(w);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw WavError("wav: cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw WavError("wav: write failed for " + path);
}

inline Waveform wav_read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavError("wav: cannot open " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_wav(bytes, path);
}

}  // namespace gridsep::data
