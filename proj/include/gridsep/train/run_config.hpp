// gridsep/train/run_config.hpp

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

// Flat `key = value` run configuration. Lines starting with '#' and text
// after an unquoted '#' are comments; unknown keys are errors.

#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "gridsep/model/config.hpp"
#include "gridsep/objectives/losses.hpp"
#include "gridsep/signal/stft.hpp"

namespace gridsep::train {

enum class Precision { kFloat32, kFloat64 };

struct TrainConfig {
  objectives::Objective objective = objectives::Objective::kMixtureConstraint;
  double lr = 1e-3;
  double min_lr = 1e-5;
  std::size_t max_epochs = 50;
  std::size_t patience = 3;  // epochs without improvement before halving
  double clip_norm = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t grad_accum = 1;
  double segment_seconds = 4.0;
  std::uint64_t seed = 1;
  Precision precision = Precision::kFloat32;
  double max_wall_minutes = 0;  // 0: no limit
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  model::ModelConfig model;
  signal::StftConfig stft;
  TrainConfig train;

  void validate() const {
    model.validate();
    stft.validate();
    if (stft.n_freq() != model.n_freq)
      throw ConfigError(fmt::format("n_freq = {} does not match n_dft = {} (expected {})",
                                    model.n_freq, stft.n_dft, stft.n_freq()));
    if (!(train.lr > 0) || !(train.min_lr >= 0)) throw ConfigError("lr must be positive");
    if (train.patience == 0) throw ConfigError("patience must be >= 1");
    if (!(train.clip_norm > 0)) throw ConfigError("clip_norm must be positive");
    if (train.grad_accum == 0) throw ConfigError("grad_accum must be >= 1");
    if (!(train.segment_seconds > 0)) throw ConfigError("segment_seconds must be positive");
    if (!(train.adam_beta1 >= 0 && train.adam_beta1 < 1 && train.adam_beta2 >= 0 &&
          train.adam_beta2 < 1))
      throw ConfigError("adam betas must lie in [0, 1)");
  }

  /// Applies one key/value pair; throws ConfigError naming unknown keys.
  void set(const std::string& key, const std::string& value);

  /// Canonical text form; parse(to_text()) reproduces the configuration.
  std::string to_text() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    T out{};
    if constexpr (std::is_same_v<T, double>) out = std::stod(v, &used);
    else if constexpr (std::is_same_v<T, int>) out = std::stoi(v, &used);
    else {
      if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
      out = static_cast<T>(std::stoull(v, &used));
    }
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("invalid value '{}' for key '{}'", v, key));
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(fmt::format("invalid boolean '{}' for key '{}'", v, key));
}

}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& value) {
  using detail::parse_number;
  const auto sz = [&] { return parse_number<std::size_t>(key, value); };
  const auto real = [&] { return parse_number<double>(key, value); };
  auto& m = model;
  auto& t = train;
  const std::map<std::string, std::function<void()>> setters = {
      {"emb_dim", [&] { m.emb_dim = sz(); }},
      {"num_blocks", [&] { m.num_blocks = sz(); }},
      {"unfold_kernel", [&] { m.unfold_kernel = sz(); }},
      {"unfold_stride", [&] { m.unfold_stride = sz(); }},
      {"lstm_hidden", [&] { m.lstm_hidden = sz(); }},
      {"attn_qk_dim", [&] { m.attn_qk_dim = sz(); }},
      {"attn_heads", [&] { m.attn_heads = sz(); }},
      {"use_attention", [&] { m.use_attention = detail::parse_bool(key, value); }},
      {"num_speakers", [&] { m.num_speakers = sz(); }},
      {"n_freq", [&] { m.n_freq = sz(); }},
      {"head_mode", [&] { m.head_mode = model::parse_head_mode(value); }},
      {"mask_clip", [&] { m.mask_clip = real(); }},
      {"sample_rate", [&] { stft.sample_rate = parse_number<int>(key, value); }},
      {"win_length", [&] { stft.win_length = sz(); }},
      {"hop", [&] { stft.hop = sz(); }},
      {"n_dft", [&] { stft.n_dft = sz(); }},
      {"objective", [&] { t.objective = objectives::parse_objective(value); }},
      {"lr", [&] { t.lr = real(); }},
      {"min_lr", [&] { t.min_lr = real(); }},
      {"max_epochs", [&] { t.max_epochs = sz(); }},
      {"patience", [&] { t.patience = sz(); }},
      {"clip_norm", [&] { t.clip_norm = real(); }},
      {"adam_beta1", [&] { t.adam_beta1 = real(); }},
      {"adam_beta2", [&] { t.adam_beta2 = real(); }},
      {"adam_eps", [&] { t.adam_eps = real(); }},
      {"grad_accum", [&] { t.grad_accum = sz(); }},
      {"segment_seconds", [&] { t.segment_seconds = real(); }},
      {"seed", [&] { t.seed = parse_number<std::uint64_t>(key, value); }},
      {"precision",
       [&] {
         if (value == "float32") t.precision = Precision::kFloat32;
         else if (value == "float64") t.precision = Precision::kFloat64;
         else throw ConfigError("precision must be float32 or float64, got '" + value + "'");
       }},
      {"max_wall_minutes", [&] { t.max_wall_minutes = real(); }},
  };
  const auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
  try {
    it->second();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(fmt::format("key '{}': {}", key, e.what()));
  }
}

inline std::string RunConfig::to_text() const {
  const auto& m = model;
  const auto& t = train;
  std::string s;
  s += "# model (D B I J H E L)\n";
  s += fmt::format("emb_dim = {}\nnum_blocks = {}\nunfold_kernel = {}\nunfold_stride = {}\n",
                   m.emb_dim, m.num_blocks, m.unfold_kernel, m.unfold_stride);
  s += fmt::format("lstm_hidden = {}\nattn_qk_dim = {}\nattn_heads = {}\nuse_attention = {}\n",
                   m.lstm_hidden, m.attn_qk_dim, m.attn_heads, m.use_attention);
  s += fmt::format("num_speakers = {}\nn_freq = {}\nhead_mode = {}\nmask_clip = {}\n",
                   m.num_speakers, m.n_freq, model::to_string(m.head_mode), m.mask_clip);
  s += "# stft\n";
  s += fmt::format("sample_rate = {}\nwin_length = {}\nhop = {}\nn_dft = {}\n", stft.sample_rate,
                   stft.win_length, stft.hop, stft.n_dft);
  s += "# training\n";
  s += fmt::format("objective = {}\nlr = {}\nmin_lr = {}\nmax_epochs = {}\npatience = {}\n",
                   objectives::to_string(t.objective), t.lr, t.min_lr, t.max_epochs, t.patience);
  s += fmt::format("clip_norm = {}\nadam_beta1 = {}\nadam_beta2 = {}\nadam_eps = {}\n",
                   t.clip_norm, t.adam_beta1, t.adam_beta2, t.adam_eps);
  s += fmt::format("grad_accum = {}\nsegment_seconds = {}\nseed = {}\nprecision = {}\n",
                   t.grad_accum, t.segment_seconds, t.seed,
                   t.precision == Precision::kFloat32 ? "float32" : "float64");
  s += fmt::format("max_wall_minutes = {}\n", t.max_wall_minutes);
  return s;
}

/// Parses config text on top of `base` (defaults when omitted).
inline RunConfig parse_run_config(const std::string& text, RunConfig base = {},
                                  const std::string& what = "config") {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(fmt::format("{}:{}: expected 'key = value'", what, lineno));
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    try {
      base.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("{}:{}: {}", what, lineno, e.what()));
    }
  }
  try {
    base.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("{}: {}", what, e.what()));
  }
  return base;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), {}, path);
}

}  // namespace gridsep::train
