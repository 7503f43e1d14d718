// tests/test_model.cpp

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
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "gridsep/cli/verify.hpp"
#include "gridsep/model/tfgridnet.hpp"
#include "gridsep/objectives/losses.hpp"
#include "test_util.hpp"

namespace gridsep {
namespace {

using namespace gridsep::testing;
using model::ModelConfig;
using model::TfGridNet;
using signal::StftConfig;

using Net = TfGridNet<double>;

StftConfig small_stft(std::size_t n_dft) {
  StftConfig s;
  s.win_length = n_dft;
  s.hop = std::max<std::size_t>(1, n_dft / 4);
  s.n_dft = n_dft;
  return s;
}

ModelConfig small_config() {
  ModelConfig c;
  c.emb_dim = 4;
  c.num_blocks = 2;
  c.unfold_kernel = 2;
  c.unfold_stride = 1;
  c.lstm_hidden = 4;
  c.attn_qk_dim = 2;
  c.attn_heads = 2;
  c.use_attention = true;
  c.n_freq = 9;
  return c;
}

void set_all(Net& net, const std::string& name, double value) {
  auto t = net.parameters().at(name);
  for (auto& v : t.mutable_data()) v = value;
}

Td permute_axis(const Td& x, std::size_t axis, const std::vector<std::size_t>& perm) {
  // x [D, T, F]; out[..., i, ...] = x[..., perm[i], ...] along `axis`.
  const std::size_t d = x.dim(0), t = x.dim(1), f = x.dim(2);
  Td out(x.shape());
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < t; ++b)
      for (std::size_t c = 0; c < f; ++c) {
        const std::size_t sb = axis == 1 ? perm[b] : b, sc = axis == 2 ? perm[c] : c;
        out.mutable_data()[(a * t + b) * f + c] = x[(a * t + sb) * f + sc];
      }
  return out;
}

// Config validation and parameter counting -------------------------------------

TEST(ModelConfig, Validation) {
  ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  c.attn_heads = 3;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = ModelConfig{};
  c.unfold_kernel = 1;
  c.unfold_stride = 2;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = ModelConfig{};
  c.head_mode = model::HeadMode::kComplexRatioMask;
  c.mask_clip = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(CountParams, MatchesInstantiatedNetwork) {
  for (bool attention : {false, true})
    for (std::size_t heads : {1u, 2u}) {
      auto c = small_config();
      c.use_attention = attention;
      c.attn_heads = heads;
      Net net(c, small_stft(16), 1);
      EXPECT_EQ(model::count_params(c), net.parameters().scalar_count());
    }
}

TEST(CountParams, ReferenceSizesWithinFivePercent) {
  // Rows 1, 4 and 10 of the ablation grid: 2.6 M, 3.6 M and 14.4 M.
  for (int row : {1, 4, 10}) {
    const auto& r = cli::ablation_rows()[row - 1];
    const double m = model::count_params(cli::ablation_config(r)) / 1e6;
    EXPECT_NEAR(m / r.reference_m, 1.0, 0.05) << "row " << row;
  }
}

TEST(CountParams, MonotoneInEachHyperParameter) {
  ModelConfig base;
  base.use_attention = true;
  base.attn_heads = 2;
  const auto n = [](ModelConfig c) { return model::count_params(c); };
  auto c = base;
  c.emb_dim = 32;
  EXPECT_GE(n(c), n(base));
  c = base;
  c.lstm_hidden = 192;
  EXPECT_GE(n(c), n(base));
  c = base;
  c.num_blocks = 7;
  EXPECT_GE(n(c), n(base));
  c = base;
  c.unfold_kernel = 9;
  EXPECT_GE(n(c), n(base));
  c = base;
  c.attn_heads = 4;
  EXPECT_GE(n(c), n(base));
}

TEST(Model, ParameterNamesAreLexicographic) {
  Net net(small_config(), small_stft(16), 3);
  std::vector<std::string> names;
  for (const auto& [name, _] : net.parameters()) names.push_back(name);
  EXPECT_TRUE(std::is_sorted(names.begin(), names.end()));
  EXPECT_TRUE(std::adjacent_find(names.begin(), names.end()) == names.end());
}

TEST(Model, RejectsMismatchedStft) {
  EXPECT_THROW(Net(small_config(), small_stft(8), 1), std::invalid_argument);
}

// Encoder ---------------------------------------------------------------------

TEST(Encode, ZeroSpectrogramWithZeroBiasGivesZeros) {
  Net net(small_config(), small_stft(16), 4);
  set_all(net, "encoder.conv.bias", 0.0);
  auto r = net.encode(Td(Shape{2, 5, 9}));
  EXPECT_EQ(r.shape(), (Shape{4, 5, 9}));
  for (double v : r.data()) EXPECT_EQ(v, 0.0);
}

TEST(Encode, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  Net net(small_config(), small_stft(16), 5);
  auto x = random(Shape{2, 4, 9}, rng), w = random(Shape{4, 4, 9}, rng);
  std::vector<Td> inputs{x};
  for (const auto& [name, p] : net.parameters())
    if (name.rfind("encoder.", 0) == 0) inputs.push_back(p);
  EXPECT_LT(grad_error([&] { return ad::dot(net.encode(x), w); }, inputs), 1e-4);
}

// Intra-frame and sub-band modules ----------------------------------------------

TEST(SequenceModules, ShapePreservedForUnfoldSettings) {
  std::mt19937_64 rng(6);
  for (auto [i, j] : std::vector<std::pair<std::size_t, std::size_t>>{{1, 1}, {4, 1}, {8, 1}, {8, 2}}) {
    auto c = small_config();
    c.unfold_kernel = i;
    c.unfold_stride = j;
    Net net(c, small_stft(16), 6);
    auto r = random(Shape{4, 5, 9}, rng);
    EXPECT_EQ(net.intra_frame(r, 0).shape(), r.shape());
    EXPECT_EQ(net.sub_band(r, 0).shape(), r.shape());
    EXPECT_EQ(net.block(r, 1).shape(), r.shape());
  }
}

TEST(SequenceModules, ZeroDeconvMakesResidualIdentity) {
  std::mt19937_64 rng(7);
  Net net(small_config(), small_stft(16), 7);
  for (const char* mod : {"intra", "subband"}) {
    set_all(net, std::string("block.0.") + mod + ".deconv.weight", 0.0);
    set_all(net, std::string("block.0.") + mod + ".deconv.bias", 0.0);
  }
  auto r = random(Shape{4, 5, 9}, rng);
  EXPECT_EQ(max_abs_diff(net.intra_frame(r, 0).data(), r.data()), 0.0);
  EXPECT_EQ(max_abs_diff(net.sub_band(r, 0).data(), r.data()), 0.0);
}

TEST(SequenceModules, IntraFrameCommutesWithFramePermutation) {
  std::mt19937_64 rng(8);
  Net net(small_config(), small_stft(16), 8);
  auto r = random(Shape{4, 6, 9}, rng);
  std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  auto a = net.intra_frame(permute_axis(r, 1, perm), 0);
  auto b = permute_axis(net.intra_frame(r, 0), 1, perm);
  // Batched GEMM kernels may round differently by row position.
  EXPECT_LT(max_abs_diff(a.data(), b.data()), 1e-14);
}

TEST(SequenceModules, SubBandCommutesWithFrequencyPermutation) {
  std::mt19937_64 rng(9);
  Net net(small_config(), small_stft(16), 9);
  auto r = random(Shape{4, 6, 9}, rng);
  std::vector<std::size_t> perm{8, 2, 0, 7, 1, 3, 6, 5, 4};
  auto a = net.sub_band(permute_axis(r, 2, perm), 0);
  auto b = permute_axis(net.sub_band(r, 0), 2, perm);
  EXPECT_LT(max_abs_diff(a.data(), b.data()), 1e-14);
}

// Attention -----------------------------------------------------------------------

TEST(Attention, MatricesAreRowStochasticAndCountedPerBlockAndHead) {
  std::mt19937_64 rng(10);
  for (std::size_t heads : {1u, 2u, 4u}) {
    auto c = small_config();
    c.attn_heads = heads;
    Net net(c, small_stft(16), 10);
    model::ForwardTrace<double> trace;
    const std::size_t t = 7;
    net.separate_spectrogram(random(Shape{2, t, 9}, rng), &trace);
    ASSERT_EQ(trace.attention.size(), c.num_blocks * heads);
    for (const auto& a : trace.attention) {
      ASSERT_EQ(a.shape(), (Shape{t, t}));
      for (std::size_t i = 0; i < t; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < t; ++j) s += a[i * t + j];
        EXPECT_NEAR(s, 1.0, 1e-6);
      }
    }
  }
}

TEST(Attention, SingleHeadHasNoOutputProjection) {
  auto c = small_config();
  c.attn_heads = 1;
  Net one(c, small_stft(16), 11);
  for (const auto& [name, _] : one.parameters()) EXPECT_EQ(name.find("attn.output"), std::string::npos);
  c.attn_heads = 2;
  Net two(c, small_stft(16), 11);
  EXPECT_TRUE(two.parameters().contains("block.0.attn.output.conv.weight"));
}

TEST(Attention, SingleFrameWeightIsOne) {
  std::mt19937_64 rng(12);
  auto c = small_config();
  c.attn_heads = 1;
  Net net(c, small_stft(16), 12);
  model::ForwardTrace<double> trace;
  auto z = random(Shape{4, 1, 9}, rng);
  auto y = net.attention(z, 0, &trace);
  ASSERT_EQ(trace.attention.size(), 1u);
  EXPECT_EQ(trace.attention[0].item(), 1.0);
  // Output is the residual plus the value projection of the only frame.
  set_all(net, "block.0.attn.head.0.value.norm.gamma", 0.0);
  set_all(net, "block.0.attn.head.0.value.norm.beta", 0.0);
  EXPECT_EQ(max_abs_diff(net.attention(z, 0).data(), z.data()), 0.0);
}

// Two frames, one channel, two frequencies, L = 1, E = 1, against a scalar
// evaluation of conv -> PReLU -> cfLN -> softmax(q k^T / sqrt(F E)) v.
TEST(Attention, TwoFrameScalarOracle) {
  ModelConfig c;
  c.emb_dim = 1;
  c.num_blocks = 1;
  c.unfold_kernel = 1;
  c.lstm_hidden = 1;
  c.attn_qk_dim = 1;
  c.attn_heads = 1;
  c.use_attention = true;
  c.n_freq = 2;
  StftConfig s;
  s.win_length = 2;
  s.hop = 1;
  s.n_dft = 2;
  Net net(c, s, 13);
  const auto& p = net.parameters();
  const std::vector<double> z{0.3, -0.8, 1.1, 0.4};  // [D=1, T=2, F=2]
  auto proj = [&](const std::string& which, std::size_t t) {
    const std::string pp = "block.0.attn.head.0." + which + ".";
    const double w = p.at(pp + "conv.weight")[0], b = p.at(pp + "conv.bias")[0], a = p.at(pp + "prelu")[0];
    double y[2];
    for (std::size_t f = 0; f < 2; ++f) {
      const double pre = w * z[t * 2 + f] + b;
      y[f] = pre >= 0 ? pre : a * pre;
    }
    const double mean = (y[0] + y[1]) / 2;
    const double var = ((y[0] - mean) * (y[0] - mean) + (y[1] - mean) * (y[1] - mean)) / 2;
    std::vector<double> out(2);
    for (std::size_t f = 0; f < 2; ++f)
      out[f] = (y[f] - mean) / std::sqrt(var + 1e-5) * p.at(pp + "norm.gamma")[f] + p.at(pp + "norm.beta")[f];
    return out;
  };
  // Make the affine terms non-trivial so the oracle exercises them.
  for (const char* which : {"query", "key", "value"}) {
    auto g = p.at(std::string("block.0.attn.head.0.") + which + ".norm.gamma");
    auto b = p.at(std::string("block.0.attn.head.0.") + which + ".norm.beta");
    g.mutable_data()[0] = 0.7;
    g.mutable_data()[1] = 1.3;
    b.mutable_data()[0] = 0.2;
    b.mutable_data()[1] = -0.1;
  }
  auto y = net.attention(Td(Shape{1, 2, 2}, z), 0);
  for (std::size_t t = 0; t < 2; ++t) {
    const auto q = proj("query", t);
    double score[2], wsum = 0;
    for (std::size_t u = 0; u < 2; ++u) {
      const auto k = proj("key", u);
      score[u] = std::exp((q[0] * k[0] + q[1] * k[1]) / std::sqrt(2.0));
      wsum += score[u];
    }
    for (std::size_t f = 0; f < 2; ++f) {
      double a = 0;
      for (std::size_t u = 0; u < 2; ++u) a += score[u] / wsum * proj("value", u)[f];
      EXPECT_NEAR(y[t * 2 + f], z[t * 2 + f] + a, 1e-12);
    }
  }
}

TEST(Attention, ZeroOutputProjectionIsIdentity) {
  std::mt19937_64 rng(14);
  Net net(small_config(), small_stft(16), 14);
  set_all(net, "block.0.attn.output.norm.gamma", 0.0);
  set_all(net, "block.0.attn.output.norm.beta", 0.0);
  auto z = random(Shape{4, 5, 9}, rng);
  EXPECT_EQ(max_abs_diff(net.attention(z, 0).data(), z.data()), 0.0);
}

// Decoder ---------------------------------------------------------------------------

TEST(Decode, MappingWithZeroWeightsGivesSilence) {
  std::mt19937_64 rng(15);
  Net net(small_config(), small_stft(16), 15);
  set_all(net, "decoder.deconv.weight", 0.0);
  set_all(net, "decoder.deconv.bias", 0.0);
  auto specs = net.decode(random(Shape{4, 5, 9}, rng), random(Shape{2, 5, 9}, rng));
  ASSERT_EQ(specs.size(), 2u);
  for (const auto& s : specs) {
    EXPECT_EQ(s.shape(), (Shape{2, 5, 9}));
    for (double v : s.data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Decode, IdentityMaskReturnsMixture) {
  std::mt19937_64 rng(16);
  auto c = small_config();
  c.head_mode = model::HeadMode::kComplexRatioMask;
  Net net(c, small_stft(16), 16);
  set_all(net, "decoder.deconv.weight", 0.0);
  auto bias = net.parameters().at("decoder.deconv.bias");
  std::copy_n(std::vector<double>{1, 0, 7.3, 0}.begin(), 4, bias.mutable_data().begin());
  auto mix = random(Shape{2, 5, 9}, rng);
  auto specs = net.decode(random(Shape{4, 5, 9}, rng), mix);
  EXPECT_EQ(max_abs_diff(specs[0].data(), mix.data()), 0.0);
  // 7.3 is clipped to 5 before the complex product.
  for (std::size_t i = 0; i < mix.numel(); ++i) EXPECT_NEAR(specs[1][i], 5 * mix[i], 1e-14);
}

// Whole network -------------------------------------------------------------------------

TEST(ForwardSeparate, ShapesAndDeterminism) {
  std::mt19937_64 rng(17);
  Net net(small_config(), small_stft(16), 17);
  signal::Waveform mix{random(Shape{57}, rng).values()};
  const auto a = model::forward_separate(mix, net), b = model::forward_separate(mix, net);
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_EQ(a[c].size(), mix.size());
    EXPECT_EQ(a[c].samples, b[c].samples);
  }
}

TEST(ForwardSeparate, SiSdrLossGradient) {
  std::mt19937_64 rng(18);
  auto c = small_config();
  c.num_blocks = 1;
  c.use_attention = false;
  Net net(c, small_stft(16), 18);
  auto mix = random(Shape{30}, rng), s1 = random(Shape{30}, rng);
  auto s2 = ad::sub(mix, s1);
  std::vector<Td> inputs;
  for (const auto& [_, p] : net.parameters()) inputs.push_back(p);
  const double err = grad_error(
      [&] {
        auto ests = net.separate(mix);
        return objectives::si_sdr_se_loss<double>(ests, {s1, s2});
      },
      inputs);
  EXPECT_LT(err, 1e-4);
}

TEST(Model, EveryAblationConfigPreservesBlockShape) {
  std::mt19937_64 rng(19);
  for (const auto& row : cli::ablation_rows()) {
    auto c = cli::ablation_config(row);
    c.num_blocks = 1;
    Net net(c, StftConfig{}, 19);
    auto r = random(Shape{c.emb_dim, 2, 129}, rng);
    EXPECT_EQ(net.block(r, 0).shape(), r.shape()) << "row " << row.row;
  }
}

}  // namespace
}  // namespace gridsep
