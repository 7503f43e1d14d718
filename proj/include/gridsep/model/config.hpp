// gridsep/model/config.hpp

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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gridsep::model {

enum class HeadMode { kMapping, kComplexRatioMask };

inline std::string to_string(HeadMode m) {
  return m == HeadMode::kMapping ? "mapping" : "complex_ratio_mask";
}

inline HeadMode parse_head_mode(const std::string& s) {
  if (s == "mapping") return HeadMode::kMapping;
  if (s == "complex_ratio_mask" || s == "mask") return HeadMode::kComplexRatioMask;
  throw std::invalid_argument("unknown head mode '" + s + "' (mapping | complex_ratio_mask)");
}

/// Network hyper-parameters.
struct ModelConfig {
  std::size_t emb_dim = 16;        // D, embedding per T-F unit
  std::size_t num_blocks = 6;      // B
  std::size_t unfold_kernel = 8;   // I
  std::size_t unfold_stride = 1;   // J
  std::size_t lstm_hidden = 128;   // H, per direction
  std::size_t attn_qk_dim = 4;     // E, query/key channels per T-F unit
  std::size_t attn_heads = 1;      // L
  bool use_attention = false;
  std::size_t num_speakers = 2;    // C
  std::size_t n_freq = 129;        // F
  HeadMode head_mode = HeadMode::kMapping;
  double mask_clip = 5.0;

  std::size_t head_value_dim() const { return emb_dim / attn_heads; }

  void validate() const {
    if (emb_dim == 0 || num_blocks == 0 || lstm_hidden == 0 || attn_qk_dim == 0 ||
        attn_heads == 0 || num_speakers == 0 || n_freq == 0)
      throw std::invalid_argument("model config: all extents must be >= 1");
    if (unfold_stride < 1 || unfold_kernel < unfold_stride)
      throw std::invalid_argument("model config: need I >= J >= 1");
    if (emb_dim % attn_heads != 0)
      throw std::invalid_argument("model config: D must be divisible by L");
    if (head_mode == HeadMode::kComplexRatioMask && !(mask_clip > 0))
      throw std::invalid_argument("model config: mask_clip must be positive in mask mode");
  }
};

/// Trainable scalar count of the network built for `cfg`.
inline std::size_t count_params(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.emb_dim, h = cfg.lstm_hidden, i = cfg.unfold_kernel;
  const std::size_t f = cfg.n_freq, e = cfg.attn_qk_dim, l = cfg.attn_heads;
  const std::size_t two_c = 2 * cfg.num_speakers;
  const std::size_t encoder = 2 * d * 9 + d + 2 * d;
  const std::size_t unfolded = i * d;
  const std::size_t lstm_dir = 4 * h * (unfolded + h) + 4 * h;
  const std::size_t seq_module = 2 * unfolded + 2 * lstm_dir + 2 * h * d * i + d;
  std::size_t attention = 0;
  if (cfg.use_attention) {
    const std::size_t dv = cfg.head_value_dim();
    const auto proj = [&](std::size_t out) { return d * out + out + 1 + 2 * out * f; };
    attention = l * (2 * proj(e) + proj(dv));
    if (l > 1) attention += proj(d);
  }
  const std::size_t decoder = d * two_c * 9 + two_c;
  return encoder + cfg.num_blocks * (2 * seq_module + attention) + decoder;
}

}  // namespace gridsep::model
