// tests/test_data.cpp

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
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "gridsep/data/corpus.hpp"
#include "gridsep/data/synth.hpp"
#include "gridsep/data/wav.hpp"

namespace gridsep::data {
namespace {

namespace fs = std::filesystem;

double peak(const std::vector<double>& x) {
  double m = 0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

// Largest normalized cross-correlation over all lags.
double max_xcorr(const std::vector<double>& a, const std::vector<double>& b) {
  const double norm = std::sqrt(energy(a) * energy(b));
  const auto n = static_cast<std::ptrdiff_t>(a.size());
  double best = 0;
  for (std::ptrdiff_t lag = -(n - 1); lag < n; ++lag) {
    double s = 0;
    for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(0, -lag); i < std::min(n, n - lag); ++i)
      s += a[i] * b[i + lag];
    best = std::max(best, std::abs(s) / norm);
  }
  return best;
}

Waveform wave(std::vector<double> x, int sr = 8000) { return Waveform{std::move(x), sr}; }

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("gridsep_test_data_" + name);
  fs::remove_all(p);
  return p;
}

TEST(SynthSource, DeterministicWithPeakHalf) {
  for (auto style : {SourceStyle::kVoiced, SourceStyle::kNoiseBand}) {
    const auto a = synth_source(42, style, 1.0);
    const auto b = synth_source(42, style, 1.0);
    EXPECT_EQ(a.samples, b.samples);
    EXPECT_EQ(a.size(), 8000u);
    EXPECT_NEAR(peak(a.samples), 0.5, 1e-6);
    EXPECT_NE(a.samples, synth_source(43, style, 1.0).samples);
  }
}

TEST(SynthSource, RejectsShortDuration) {
  EXPECT_THROW(synth_source(1, SourceStyle::kVoiced, 0.4), std::invalid_argument);
  EXPECT_THROW(synth_source(1, SourceStyle::kVoiced, 1.0, 0), std::invalid_argument);
}

TEST(SynthSource, DistinctSeedsAreWeaklyCorrelated) {
  for (auto style : {SourceStyle::kVoiced, SourceStyle::kNoiseBand}) {
    for (std::uint64_t k = 0; k < 20; ++k) {
      const auto a = synth_source(mix_seed(k, 1), style, 0.5);
      const auto b = synth_source(mix_seed(k, 2), style, 0.5);
      EXPECT_LT(max_xcorr(a.samples, b.samples), 0.5) << to_string(style) << " pair " << k;
    }
  }
}

TEST(MakeMixture, ZeroDbKeepsEqualEnergies) {
  const auto s1 = wave({1, 0, 0, 0}), s2 = wave({0, 2, 0, 0});
  const auto u = make_mixture(s1, s2, 0.0);
  EXPECT_EQ(u.sources[1].samples, (std::vector<double>{0, 1, 0, 0}));
  EXPECT_EQ(u.mixture.samples, (std::vector<double>{1, 1, 0, 0}));
}

TEST(MakeMixture, SetsRelativeLevel) {
  const auto s1 = synth_source(1, SourceStyle::kVoiced, 1.0);
  const auto s2 = synth_source(2, SourceStyle::kNoiseBand, 1.0);
  for (double snr : {-5.0, 0.0, 2.5, 5.0}) {
    const auto u = make_mixture(s1, s2, snr);
    EXPECT_NEAR(10 * std::log10(energy(u.sources[0].samples) / energy(u.sources[1].samples)), snr, 1e-9);
    EXPECT_EQ(u.sources[0].samples, s1.samples);
    for (std::size_t i = 0; i < u.length(); ++i)
      ASSERT_EQ(u.mixture.samples[i], u.sources[0].samples[i] + u.sources[1].samples[i]);
  }
}

TEST(MakeMixture, Rejections) {
  EXPECT_THROW(make_mixture(wave({1, 1}), wave({0, 0}), 0), std::invalid_argument);
  EXPECT_THROW(make_mixture(wave({1, 1}), wave({1, 1, 1}), 0), std::invalid_argument);
  EXPECT_THROW(make_mixture(wave({1, 1}), wave({1, 1}, 16000), 0), std::invalid_argument);
}

TEST(StandardDeviation, Population) {
  EXPECT_DOUBLE_EQ(standard_deviation({1, -1, 1, -1}), 1.0);
  EXPECT_DOUBLE_EQ(standard_deviation({2, 4, 4, 4, 5, 5, 7, 9}), 2.0);
  EXPECT_EQ(standard_deviation({}), 0.0);
}

TEST(NormalizeVariance, UnitVarianceAndConstantRatios) {
  auto u = make_utterance("x", 7, 3.0, 1.0);
  const auto before = u;
  const double sd = normalize_variance(u);
  EXPECT_NEAR(standard_deviation(u.mixture.samples), 1.0, 1e-12);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < u.length(); i += 97)
      EXPECT_NEAR(u.sources[c].samples[i] * sd, before.sources[c].samples[i], 1e-14);
  for (std::size_t i = 0; i < u.length(); ++i)
    ASSERT_EQ(u.mixture.samples[i], u.sources[0].samples[i] + u.sources[1].samples[i]);
  EXPECT_NEAR(normalize_variance(u), 1.0, 1e-12);
  EXPECT_NEAR(standard_deviation(u.mixture.samples), 1.0, 1e-12);
}

TEST(NormalizeVariance, RejectsSilence) {
  Utterance u;
  u.mixture = wave({0, 0, 0});
  u.sources = {wave({0, 0, 0}), wave({0, 0, 0})};
  EXPECT_THROW(normalize_variance(u), std::invalid_argument);
}

TEST(SampleSegment, CutsFourSecondsFromSix) {
  const auto u = make_utterance("x", 3, 0.0, 6.0);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = sample_segment(u, 4.0, rng);
    ASSERT_EQ(s.length(), 32000u);
    const auto it = std::search(u.mixture.samples.begin(), u.mixture.samples.end(), s.mixture.samples.begin(),
                                s.mixture.samples.begin() + 64);
    ASSERT_NE(it, u.mixture.samples.end());
    const auto start = static_cast<std::size_t>(it - u.mixture.samples.begin());
    EXPECT_LE(start, 16000u);
    for (std::size_t c = 0; c < 2; ++c)
      EXPECT_TRUE(std::equal(s.sources[c].samples.begin(), s.sources[c].samples.end(),
                             u.sources[c].samples.begin() + static_cast<std::ptrdiff_t>(start)));
    for (std::size_t i = 0; i < s.length(); ++i)
      ASSERT_EQ(s.mixture.samples[i], s.sources[0].samples[i] + s.sources[1].samples[i]);
  }
}

TEST(SampleSegment, PadsShortUtteranceWithZeros) {
  const auto u = make_utterance("x", 3, 0.0, 3.0);
  std::mt19937_64 rng(1);
  const auto s = sample_segment(u, 4.0, rng);
  ASSERT_EQ(s.length(), 32000u);
  EXPECT_TRUE(std::equal(u.mixture.samples.begin(), u.mixture.samples.end(), s.mixture.samples.begin()));
  for (std::size_t i = 24000; i < 32000; ++i) {
    ASSERT_EQ(s.mixture.samples[i], 0.0);
    ASSERT_EQ(s.sources[0].samples[i], 0.0);
    ASSERT_EQ(s.sources[1].samples[i], 0.0);
  }
}

TEST(Wav, Pcm16RoundTripWithinOneStep) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Waveform w{std::vector<double>(1001), 8000};
  for (double& v : w.samples) v = d(rng);
  const auto back = decode_wav(encode_wav(w));
  ASSERT_EQ(back.size(), w.size());
  EXPECT_EQ(back.sample_rate, 8000);
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_LE(std::abs(back.samples[i] - w.samples[i]), 1.0 / 32768);
}

TEST(Wav, Pcm16Extremes) {
  EXPECT_EQ(dequantize_pcm16(-32768), -1.0);
  EXPECT_EQ(quantize_pcm16(-1.0), -32768);
  EXPECT_EQ(quantize_pcm16(0.0), 0);
  EXPECT_EQ(quantize_pcm16(5.0), 32767);
  EXPECT_EQ(quantize_pcm16(-5.0), -32768);
}

TEST(Wav, HeaderFields) {
  const auto b = encode_wav(wave({0.0, 0.5, -0.5}));
  ASSERT_EQ(b.size(), 44u + 6u);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "RIFF");
  EXPECT_EQ(std::string(b.begin() + 8, b.begin() + 12), "WAVE");
  const auto u32 = [&](std::size_t at) {
    const auto* p = reinterpret_cast<const unsigned char*>(b.data()) + at;
    return p[0] | p[1] << 8 | p[2] << 16 | static_cast<std::uint32_t>(p[3]) << 24;
  };
  EXPECT_EQ(u32(24), 8000u);
  EXPECT_EQ(u32(28), 16000u);
  EXPECT_EQ(u32(40), 6u);
}

TEST(Wav, Rejections) {
  auto good = encode_wav(wave({0.1, 0.2}));
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_wav(bad_magic), WavError);
  auto float_fmt = good;
  float_fmt[20] = 3;
  EXPECT_THROW(decode_wav(float_fmt), WavError);
  auto stereo = good;
  stereo[22] = 2;
  EXPECT_THROW(decode_wav(stereo), WavError);
  auto eight_bit = good;
  eight_bit[34] = 8;
  EXPECT_THROW(decode_wav(eight_bit), WavError);
  EXPECT_THROW(decode_wav(std::vector<char>(good.begin(), good.begin() + 30)), WavError);
  EXPECT_THROW(wav_read("/nonexistent/dir/x.wav"), WavError);
}

TEST(Manifest, UniqueIdsAndDisjointSeeds) {
  CorpusSpec spec;
  std::set<std::string> ids;
  std::set<std::uint64_t> seeds;
  std::size_t total = 0;
  for (Split s : kAllSplits) {
    for (const auto& e : make_manifest(spec, s)) {
      ids.insert(e.id);
      seeds.insert(e.seed);
      EXPECT_GE(e.duration_s, 4.0);
      EXPECT_LE(e.duration_s, 6.0);
      EXPECT_LE(std::abs(e.snr_db), 5.0);
      EXPECT_EQ(e.split, s);
      ++total;
    }
  }
  EXPECT_EQ(total, 700u);
  EXPECT_EQ(ids.size(), total);
  EXPECT_EQ(seeds.size(), total);
}

TEST(Manifest, RelativeLevelIsCentred) {
  CorpusSpec spec;
  spec.train = 2000;
  const auto m = make_manifest(spec, Split::kTrain);
  double mean = 0;
  for (const auto& e : m) mean += e.snr_db;
  mean /= static_cast<double>(m.size());
  EXPECT_NEAR(mean, 0.0, 0.3);
}

TEST(Manifest, FormatParseRoundTrip) {
  CorpusSpec spec;
  spec.valid = 25;
  const auto m = make_manifest(spec, Split::kValid);
  std::istringstream in(format_manifest(m));
  const auto back = parse_manifest(in, "valid.tsv");
  ASSERT_EQ(back.size(), m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_EQ(back[i].id, m[i].id);
    EXPECT_EQ(back[i].seed, m[i].seed);
    EXPECT_EQ(back[i].snr_db, m[i].snr_db);
    EXPECT_NEAR(back[i].duration_s, m[i].duration_s, 1e-9);
    EXPECT_EQ(back[i].split, Split::kValid);
  }
}

TEST(Manifest, ParseErrorsNameTheLine) {
  const auto message = [](const std::string& text) {
    std::istringstream in(text);
    try {
      parse_manifest(in, "m.tsv");
    } catch (const std::runtime_error& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message("a\t1\t0\t4\ttrain\nb\t2\t0\n").find("m.tsv:2"), std::string::npos);
  EXPECT_NE(message("a\tnope\t0\t4\ttrain\n").find("m.tsv:1"), std::string::npos);
  EXPECT_NE(message("a\t1\t0\t4\tdev\n").find("unknown split"), std::string::npos);
}

TEST(Corpus, UtterancesAreExactSumsWithinPeak) {
  CorpusSpec spec;
  spec.test = 12;
  for (const auto& e : make_manifest(spec, Split::kTest)) {
    const auto u = load_utterance(e);
    ASSERT_EQ(u.sources.size(), 2u);
    EXPECT_EQ(u.length(), static_cast<std::size_t>(std::llround(e.duration_s * 8000)));
    EXPECT_LE(peak(u.mixture.samples), kMixturePeak + 1e-12);
    for (std::size_t i = 0; i < u.length(); ++i)
      ASSERT_EQ(u.mixture.samples[i], u.sources[0].samples[i] + u.sources[1].samples[i]);
    EXPECT_NEAR(10 * std::log10(energy(u.sources[0].samples) / energy(u.sources[1].samples)), e.snr_db, 1e-9);
    EXPECT_EQ(load_utterance(e).mixture.samples, u.mixture.samples);
  }
}

TEST(Corpus, StylesAlwaysIncludeVoiced) {
  int noise = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto st = corpus_styles(s);
    EXPECT_TRUE(st[0] == SourceStyle::kVoiced || st[1] == SourceStyle::kVoiced);
    noise += st[0] == SourceStyle::kNoiseBand || st[1] == SourceStyle::kNoiseBand;
  }
  EXPECT_GT(noise, 60);
  EXPECT_LT(noise, 140);
}

TEST(Corpus, WriteIsDeterministicAndReadable) {
  CorpusSpec spec;
  spec.train = 2;
  spec.valid = 1;
  spec.test = 1;
  spec.min_duration_s = spec.max_duration_s = 1.0;
  const auto a = scratch("a"), b = scratch("b");
  write_corpus(a, spec);
  write_corpus(b, spec);
  const auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  std::size_t files = 0;
  for (const auto& f : fs::recursive_directory_iterator(a)) {
    if (!f.is_regular_file()) continue;
    EXPECT_EQ(slurp(f.path()), slurp(b / fs::relative(f.path(), a))) << f.path();
    ++files;
  }
  EXPECT_EQ(files, 3u + 4u * 3u);
  const auto entries = read_manifest(a, Split::kTrain);
  ASSERT_EQ(entries.size(), 2u);
  const auto mix = wav_read((a / "train" / (entries[0].id + ".mix.wav")).string());
  const auto u = load_utterance(entries[0]);
  ASSERT_EQ(mix.size(), u.length());
  for (std::size_t i = 0; i < mix.size(); ++i) ASSERT_LE(std::abs(mix.samples[i] - u.mixture.samples[i]), 1.0 / 32768);
  EXPECT_EQ(load_split(a, Split::kTrain).size(), 2u);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Split, Names) {
  for (Split s : kAllSplits) EXPECT_EQ(parse_split(to_string(s)), s);
  EXPECT_THROW(parse_split("dev"), std::invalid_argument);
  EXPECT_NE(utterance_seed(1, Split::kTrain, 0), utterance_seed(1, Split::kValid, 0));
  EXPECT_THROW(utterance_seed(1, Split::kTrain, kSplitStride), std::invalid_argument);
}

}  // namespace
}  // namespace gridsep::data
