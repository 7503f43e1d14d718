// gridsep/data/corpus.hpp

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

// Corpus manifests: one TSV per split, `id seed snr_db duration_s split`.
// A manifest fully determines its utterances; WAV files are written next to
// it for inspection and for the separate command.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "gridsep/data/synth.hpp"
#include "gridsep/data/wav.hpp"

namespace gridsep::data {

enum class Split { kTrain, kValid, kTest };

inline constexpr Split kAllSplits[] = {Split::kTrain, Split::kValid, Split::kTest};

inline std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "valid") return Split::kValid;
  if (s == "test") return Split::kTest;
  throw std::invalid_argument("unknown split '" + s + "' (train | valid | test)");
}

struct ManifestEntry {
  std::string id;
  std::uint64_t seed = 0;
  double snr_db = 0;
  double duration_s = 0;
  Split split = Split::kTrain;
};

/// Seeds of split k occupy [base + k * kSplitStride, base + (k + 1) * kSplitStride).
inline constexpr std::uint64_t kSplitStride = 1'000'000'000ULL;

inline std::uint64_t utterance_seed(std::uint64_t corpus_seed, Split split, std::size_t index) {
  if (index >= kSplitStride) throw std::invalid_argument("corpus: too many utterances in a split");
  return corpus_seed * 4 * kSplitStride + static_cast<std::uint64_t>(split) * kSplitStride + index;
}

struct CorpusSpec {
  std::size_t train = 500, valid = 100, test = 100;
  std::uint64_t seed = 1;
  double min_duration_s = 4.0, max_duration_s = 6.0;
  double max_abs_snr_db = 5.0;
  int sample_rate = 8000;

  std::size_t count(Split s) const {
    return s == Split::kTrain ? train : s == Split::kValid ? valid : test;
  }
};

/// Manifest for one split; relative level uniform in [-5, 5] dB and duration
/// uniform in [4, 6] s (whole samples), both drawn from the utterance seed.
inline std::vector<ManifestEntry> make_manifest(const CorpusSpec& spec, Split split) {
  std::vector<ManifestEntry> out;
  for (std::size_t i = 0; i < spec.count(split); ++i) {
    ManifestEntry e;
    e.split = split;
    e.seed = utterance_seed(spec.seed, split, i);
    e.id = fmt::format("{}_{:05d}", to_string(split), i);
    std::mt19937_64 rng(mix_seed(e.seed, 0x6d));
    e.snr_db = std::uniform_real_distribution<double>(-spec.max_abs_snr_db, spec.max_abs_snr_db)(rng);
    const double d = std::uniform_real_distribution<double>(spec.min_duration_s, spec.max_duration_s)(rng);
    e.duration_s = static_cast<double>(std::llround(d * spec.sample_rate)) / spec.sample_rate;
    out.push_back(e);
  }
  return out;
}

inline std::string format_manifest(const std::vector<ManifestEntry>& entries) {
  std::string s;
  for (const auto& e : entries)
    s += fmt::format("{}\t{}\t{:.17g}\t{:.6f}\t{}\n", e.id, e.seed, e.snr_db, e.duration_s,
                     to_string(e.split));
  return s;
}

inline std::vector<ManifestEntry> parse_manifest(std::istream& in, const std::string& what) {
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) f.push_back(field);
    if (f.size() != 5)
      throw std::runtime_error(fmt::format("{}:{}: expected 5 tab-separated fields, got {}", what,
                                           lineno, f.size()));
    try {
      ManifestEntry e;
      e.id = f[0];
      e.seed = std::stoull(f[1]);
      e.snr_db = std::stod(f[2]);
      e.duration_s = std::stod(f[3]);
      e.split = parse_split(f[4]);
      out.push_back(e);
    } catch (const std::exception& ex) {
      throw std::runtime_error(fmt::format("{}:{}: {}", what, lineno, ex.what()));
    }
  }
  return out;
}

inline std::filesystem::path manifest_path(const std::filesystem::path& dir, Split s) {
  return dir / (to_string(s) + ".tsv");
}

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir, Split s) {
  const auto path = manifest_path(dir, s);
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  return parse_manifest(in, path.string());
}

inline Utterance load_utterance(const ManifestEntry& e, int sample_rate = 8000) {
  return make_utterance(e.id, e.seed, e.snr_db, e.duration_s, sample_rate);
}

inline std::vector<Utterance> load_split(const std::filesystem::path& dir, Split s,
                                         int sample_rate = 8000) {
  std::vector<Utterance> out;
  for (const auto& e : read_manifest(dir, s)) out.push_back(load_utterance(e, sample_rate));
  return out;
}

/// Writes manifests and `<split>/<id>.{mix,s1,s2}.wav` under `dir`.
inline void write_corpus(const std::filesystem::path& dir, const CorpusSpec& spec,
                         bool write_audio = true) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (Split s : kAllSplits) {
    const auto entries = make_manifest(spec, s);
    {
      std::ofstream out(manifest_path(dir, s), std::ios::binary);
      out << format_manifest(entries);
      if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
    }
    if (!write_audio) continue;
    const auto sub = dir / to_string(s);
    fs::create_directories(sub);
    for (const auto& e : entries) {
      const auto u = load_utterance(e, spec.sample_rate);
      wav_write((sub / (e.id + ".mix.wav")).string(), u.mixture);
      for (std::size_t c = 0; c < u.sources.size(); ++c)
        wav_write((sub / fmt::format("{}.s{}.wav", e.id, c + 1)).string(), u.sources[c]);
    }
  }
}

}  // namespace gridsep::data
