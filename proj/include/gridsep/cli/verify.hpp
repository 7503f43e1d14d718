// gridsep/cli/verify.hpp

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

// Self-verification suites behind `gridsep verify`.

#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "gridsep/adcore/gradcheck.hpp"
#include "gridsep/adcore/layers.hpp"
#include "gridsep/model/tfgridnet.hpp"
#include "gridsep/objectives/losses.hpp"
#include "gridsep/signal/stft.hpp"

namespace gridsep::cli {

using ad::Tensor;

struct CheckLine {
  std::string label;
  std::string detail;
  bool pass = false;
};

struct SuiteReport {
  std::string name;
  std::vector<CheckLine> lines;

  bool passed() const {
    for (const auto& l : lines)
      if (!l.pass) return false;
    return !lines.empty();
  }
};

// ---------------------------------------------------------------------------
// params

struct AblationRow {
  int row;
  bool attention;
  std::size_t heads, d, i, j, h;
  double reference_m;
};

/// The ablation grid: attention flag, L, D, I, J, H and reference size (M).
inline const std::vector<AblationRow>& ablation_rows() {
  static const std::vector<AblationRow> rows = {
      {1, false, 1, 64, 1, 1, 128, 2.6},  {2, false, 1, 16, 4, 1, 128, 2.6},
      {3, false, 1, 128, 1, 1, 128, 3.6}, {4, false, 1, 16, 8, 1, 128, 3.6},
      {5, false, 1, 16, 8, 1, 128, 3.6},  {6, false, 1, 16, 8, 1, 192, 6.5},
      {7, false, 1, 24, 8, 1, 192, 8.0},  {8, true, 1, 24, 8, 1, 192, 8.0},
      {9, true, 4, 24, 8, 1, 192, 8.0},   {10, true, 4, 32, 8, 1, 256, 14.4},
  };
  return rows;
}

inline model::ModelConfig ablation_config(const AblationRow& r) {
  model::ModelConfig c;
  c.num_blocks = 6;
  c.emb_dim = r.d;
  c.unfold_kernel = r.i;
  c.unfold_stride = r.j;
  c.lstm_hidden = r.h;
  c.use_attention = r.attention;
  c.attn_heads = r.heads;
  c.attn_qk_dim = 4;
  return c;
}

inline SuiteReport verify_params() {
  SuiteReport rep{"params", {}};
  for (const auto& r : ablation_rows()) {
    const double m = static_cast<double>(model::count_params(ablation_config(r))) / 1e6;
    const double dev = m / r.reference_m - 1.0;
    rep.lines.push_back({fmt::format("row {:2d}", r.row),
                         fmt::format("attn={} L={} D={:3d} I={} J={} H={:3d}  {:7.3f} M vs {:4.1f} M ({:+.1f}%)",
                                     r.attention ? "yes" : "no ", r.heads, r.d, r.i, r.j, r.h, m,
                                     r.reference_m, 100 * dev),
                         std::abs(dev) <= 0.05});
  }
  return rep;
}

// ---------------------------------------------------------------------------
// gradcheck

inline constexpr double kGradTolerance = 1e-4;

/// Block configuration for the full-block check: D=4, H=4, I=2, J=1, L=2, E=2.
inline model::ModelConfig gradcheck_block_config() {
  model::ModelConfig c;
  c.emb_dim = 4;
  c.num_blocks = 1;
  c.unfold_kernel = 2;
  c.unfold_stride = 1;
  c.lstm_hidden = 4;
  c.attn_qk_dim = 2;
  c.attn_heads = 2;
  c.use_attention = true;
  c.num_speakers = 2;
  c.n_freq = 5;
  return c;
}

/// STFT with 5 bins (window 8, hop 2).
inline signal::StftConfig tiny_stft(std::size_t n_dft = 8) {
  signal::StftConfig s;
  s.win_length = n_dft;
  s.hop = n_dft / 4;
  s.n_dft = n_dft;
  return s;
}

template <class F>
double checked(F&& f, std::vector<Tensor<double>> inputs) {
  return ad::grad_check(std::function<Tensor<double>()>(std::forward<F>(f)), std::move(inputs));
}

/// Per-primitive and whole-block finite-difference checks (64-bit).
inline SuiteReport verify_gradcheck(std::uint64_t seed = 7) {
  using namespace ad;
  std::mt19937_64 rng(seed);
  const auto rnd = [&](Shape s) { return random_tensor<double>(std::move(s), rng); };
  SuiteReport rep{"gradcheck", {}};
  const auto record = [&](const std::string& name, double err) {
    rep.lines.push_back({name, fmt::format("max rel err {:.3e}", err), err < kGradTolerance});
  };

  {
    auto x = rnd({3, 7}), w = rnd({9, 4});
    record("unfold_seq", checked([&] { return dot(unfold_seq(x, 3, 2), w); }, {x}));
  }
  {
    auto x = rnd({4, 3}), wt = rnd({4, 2, 3}), b = rnd({2}), w = rnd({2, 7});
    record("deconv1d_seq", checked([&] { return dot(deconv1d_seq(x, wt, b, 2, 7), w); }, {x, wt, b}));
  }
  {
    auto x = rnd({5, 2, 3});
    LstmDirection<double> f{rnd({16, 3}), rnd({16, 4}), rnd({16})};
    LstmDirection<double> bw{rnd({16, 3}), rnd({16, 4}), rnd({16})};
    auto w = rnd({5, 2, 8});
    record("bilstm", checked([&] { return dot(bilstm(x, f, bw), w); },
                          {x, f.w_ih, f.w_hh, f.bias, bw.w_ih, bw.w_hh, bw.bias}));
  }
  {
    auto x = rnd({2, 4, 5}), k = rnd({3, 2, 3, 3}), b = rnd({3}), w = rnd({3, 4, 5});
    record("conv2d 3x3", checked([&] { return dot(conv2d(x, k, b), w); }, {x, k, b}));
    auto k1 = rnd({3, 2, 1, 1});
    record("conv2d 1x1", checked([&] { return dot(conv2d(x, k1, b), w); }, {x, k1, b}));
    auto kd = rnd({2, 3, 3, 3});
    record("deconv2d", checked([&] { return dot(deconv2d(x, kd, b), w); }, {x, kd, b}));
  }
  {
    auto x = rnd({3, 4, 5}), w = rnd({3, 4, 5});
    auto g = rnd({3}), b = rnd({3});
    record("gLN", checked([&] { return dot(global_layer_norm(x, g, b), w); }, {x, g, b}));
    auto gc = rnd({5}), bc = rnd({5});
    record("chanLN", checked([&] { return dot(channel_layer_norm(x, gc, bc), w); }, {x, gc, bc}));
    auto gf = rnd({3, 5}), bf = rnd({3, 5});
    record("cfLN", checked([&] { return dot(cf_layer_norm(x, gf, bf), w); }, {x, gf, bf}));
  }
  {
    auto x = rnd({4, 6}), w = rnd({4, 6});
    record("softmax", checked([&] { return dot(softmax_lastdim(x), w); }, {x}));
    auto a = Tensor<double>(Shape{1}, std::vector<double>{0.25});
    record("prelu", checked([&] { return dot(prelu(x, a), w); }, {x, a}));
    auto m1 = rnd({4, 3}), m2 = rnd({3, 6});
    record("matmul", checked([&] { return dot(matmul(m1, m2), w); }, {m1, m2}));
  }
  {
    auto a = rnd({2, 3, 4}), b = rnd({2, 3, 4}), w = rnd({2, 3, 4});
    record("complex_mul", checked([&] { return dot(complex_mul(a, b), w); }, {a, b}));
  }
  {
    const auto sc = tiny_stft(16);
    signal::StftPlan<double> plan(sc);
    auto x = rnd({37}), w = rnd({37});
    record("stft/istft", checked([&] {
          auto spec = plan.analyze(x);
          return dot(plan.synthesize(mul(spec, spec), 37), w);
        }, {x}));
  }
  {
    auto e1 = rnd({16}), e2 = rnd({16}), r1 = rnd({16}), r2 = rnd({16});
    auto mix = ad::add(r1, r2);
    record("si_sdr loss", checked([&] { return objectives::si_sdr_se_loss<double>({e1, e2}, {r1, r2}); },
                               {e1, e2}));
    record("mc loss", checked([&] { return objectives::mc_loss<double>({e1, e2}, {r1, r2}, mix); },
                           {e1, e2}));
  }
  {
    const auto cfg = gradcheck_block_config();
    model::TfGridNet<double> net(cfg, tiny_stft(8), seed);
    auto r = rnd({cfg.emb_dim, 6, cfg.n_freq}), w = rnd({cfg.emb_dim, 6, cfg.n_freq});
    std::vector<Tensor<double>> inputs{r};
    for (const auto& [name, p] : net.parameters())
      if (name.rfind("block.0.", 0) == 0) inputs.push_back(p);
    record("TF-GridNet block", checked([&] { return dot(net.block(r, 0), w); }, inputs));
  }
  {
    auto cfg = gradcheck_block_config();
    cfg.n_freq = 9;
    cfg.attn_heads = 1;
    model::TfGridNet<double> net(cfg, tiny_stft(16), seed + 1);
    auto mix = rnd({40}), s1 = rnd({40});
    auto s2 = sub(mix, s1);
    std::vector<Tensor<double>> inputs;
    for (const auto& [_, p] : net.parameters()) inputs.push_back(p);
    record("forward_separate + PIT", checked([&] {
          const auto ests = net.separate(mix);
          return objectives::pit<double>(ests, {s1, s2}, &mix,
                                         objectives::Objective::kMixtureConstraint).loss;
        }, inputs));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// stft

/// istft(stft(x)) on 20 random signals per length.
inline SuiteReport verify_stft(std::uint64_t seed = 11) {
  SuiteReport rep{"stft", {}};
  signal::StftConfig cfg;
  signal::StftPlan<double> plan(cfg);
  std::mt19937_64 rng(seed);
  for (std::size_t len : {8000u, 8001u, 12345u}) {
    double worst = 0;
    for (int k = 0; k < 20; ++k) {
      auto x = ad::random_tensor<double>({len}, rng);
      auto y = plan.synthesize(plan.analyze(x), len);
      for (std::size_t i = 0; i < len; ++i) worst = std::max(worst, std::abs(y[i] - x[i]));
    }
    rep.lines.push_back({fmt::format("round trip N={}", len), fmt::format("max abs err {:.3e}", worst),
                         worst < 1e-6});
  }
  return rep;
}

// ---------------------------------------------------------------------------
// losses

inline SuiteReport verify_losses(std::uint64_t seed = 13) {
  using objectives::Objective;
  SuiteReport rep{"losses", {}};
  std::mt19937_64 rng(seed);
  const std::size_t n = 256;
  auto r1 = ad::random_tensor<double>({n}, rng), r2 = ad::random_tensor<double>({n}, rng);
  auto e1 = ad::random_tensor<double>({n}, rng), e2 = ad::random_tensor<double>({n}, rng);
  auto mix = ad::add(r1, r2);

  {
    const double base = objectives::si_sdr_se_loss<double>({e1, e2}, {r1, r2}).item();
    double worst = 0;
    for (double g : {0.1, 10.0}) {
      const double v = objectives::si_sdr_se_loss<double>({ad::scale(e1, g), e2}, {r1, r2}).item();
      worst = std::max(worst, std::abs(v - base));
    }
    rep.lines.push_back({"scale invariance (gamma 0.1, 10)", fmt::format("max |delta| {:.3e}", worst),
                         worst <= 1e-9});
  }
  {
    const auto a = objectives::pit<double>({e1, e2}, {r1, r2}, &mix, Objective::kMixtureConstraint);
    const auto b = objectives::pit<double>({e1, e2}, {r2, r1}, &mix, Objective::kMixtureConstraint);
    const bool composed = a.permutation[0] == 1 - b.permutation[0] && a.permutation[1] == 1 - b.permutation[1];
    rep.lines.push_back({"PIT reference-permutation invariance",
                         fmt::format("{:.17g} vs {:.17g}", a.loss.item(), b.loss.item()),
                         a.loss.item() == b.loss.item() && composed});
  }
  {
    // Estimates proportional to references: the scaled estimates are the
    // references themselves, which sum to the mixture.
    auto p1 = ad::scale(r1, 3.0), p2 = ad::scale(r2, 0.5);
    const auto parts = objectives::loss_parts<double>({p1, p2}, {r1, r2}, &mix, Objective::kMixtureConstraint);
    const double zero_term = parts.mc_term.item();
    const auto other = objectives::loss_parts<double>({e1, e2}, {r1, r2}, &mix, Objective::kMixtureConstraint);
    const double nonzero_term = other.mc_term.item();
    rep.lines.push_back({"MC term zero iff scaled estimates sum to mixture",
                         fmt::format("exact {:.3e}, random {:.3e}", zero_term, nonzero_term),
                         zero_term < 1e-7 && nonzero_term > 1e-3});
  }
  {
    Tensor<double> s(ad::Shape{2}, {1.0, 0.0}), e(ad::Shape{2}, {1.0, 1.0});
    const double v = objectives::si_sdr_se_loss<double>({e}, {s}).item();
    rep.lines.push_back({"hand oracle s=[1,0], s_hat=[1,1]", fmt::format("{:.6f} (expect -3.0103)", v),
                         std::abs(v + 3.0103) < 1e-4});
  }
  return rep;
}

inline SuiteReport run_suite(const std::string& name) {
  if (name == "params") return verify_params();
  if (name == "gradcheck") return verify_gradcheck();
  if (name == "stft") return verify_stft();
  if (name == "losses") return verify_losses();
  throw std::invalid_argument("unknown suite '" + name + "' (gradcheck | params | stft | losses)");
}

}  // namespace gridsep::cli
