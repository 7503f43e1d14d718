// gridsep/model/tfgridnet.hpp

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

// TF-GridNet: complex spectral mapping with stacked intra-frame, sub-band and
// full-band self-attention blocks over a D x T x F embedding.
//
//   mixture [N] -> STFT [2,T,F] -> Conv2D 3x3 + gLN -> [D,T,F]
//     -> B x (intra-frame BLSTM, sub-band BLSTM, frame-level attention)
//     -> Deconv2D 3x3 (2C channels) -> C spectrograms -> iSTFT
//
// All three block modules are residual: each maps D x T x F to D x T x F.

#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "gridsep/adcore/layers.hpp"
#include "gridsep/adcore/parameters.hpp"
#include "gridsep/model/config.hpp"
#include "gridsep/signal/stft.hpp"

namespace gridsep::model {

using ad::Shape;
using ad::Tensor;

/// Optional side outputs of a forward pass.
template <class S>
struct ForwardTrace {
  std::vector<Tensor<S>> attention;  // one T x T matrix per (block, head)
};

template <class S>
class TfGridNet {
 public:
  /// Freshly initialized network.
  TfGridNet(const ModelConfig& cfg, const signal::StftConfig& stft, std::uint64_t seed)
      : cfg_(cfg), plan_(stft) {
    cfg_.validate();
    if (stft.n_dft / 2 + 1 != cfg_.n_freq)
      throw std::invalid_argument("model n_freq does not match the STFT configuration");
    std::mt19937_64 rng(seed);
    init_parameters(rng);
    bind();
  }

  /// Network over an existing parameter set (e.g. from a checkpoint). Every
  /// expected name must be present with the expected shape.
  TfGridNet(const ModelConfig& cfg, const signal::StftConfig& stft, ad::ParameterSet<S> params)
      : cfg_(cfg), plan_(stft) {
    cfg_.validate();
    std::mt19937_64 rng(0);
    init_parameters(rng);
    for (const auto& [name, t] : params_) {
      if (!params.contains(name)) throw std::invalid_argument("missing parameter " + name);
      if (params.at(name).shape() != t.shape())
        throw std::invalid_argument("parameter " + name + " has shape " +
                                    ad::to_string(params.at(name).shape()) + ", expected " +
                                    ad::to_string(t.shape()));
    }
    if (params.size() != params_.size())
      throw std::invalid_argument("parameter set has unexpected entries");
    params_ = std::move(params);
    bind();
  }

  const ModelConfig& config() const { return cfg_; }
  const signal::StftPlan<S>& stft_plan() const { return plan_; }
  ad::ParameterSet<S>& parameters() { return params_; }
  const ad::ParameterSet<S>& parameters() const { return params_; }

  /// mix_spec [2, T, F] -> embedding [D, T, F].
  Tensor<S> encode(const Tensor<S>& mix_spec) const {
    auto x = ad::conv2d(mix_spec, enc_.weight, enc_.bias);
    return ad::global_layer_norm(x, enc_.gamma, enc_.beta);
  }

  /// Per-frame BLSTM across frequency; residual.
  Tensor<S> intra_frame(const Tensor<S>& r, std::size_t block) const {
    // [D,T,F] -> [F,T,D]: T sequences of length F
    auto seq = ad::permute(r, {2, 1, 0});
    auto y = sequence_module(seq, blocks_.at(block).intra);
    return ad::add(ad::permute(y, {2, 1, 0}), r);
  }

  /// Per-frequency BLSTM across time; residual.
  Tensor<S> sub_band(const Tensor<S>& u, std::size_t block) const {
    // [D,T,F] -> [T,F,D]: F sequences of length T
    auto seq = ad::permute(u, {1, 2, 0});
    auto y = sequence_module(seq, blocks_.at(block).sub);
    return ad::add(ad::permute(y, {2, 0, 1}), u);
  }

  /// Frame-level multi-head self-attention; residual.
  Tensor<S> attention(const Tensor<S>& z, std::size_t block, ForwardTrace<S>* trace = nullptr) const {
    const auto& blk = blocks_.at(block);
    const std::size_t t = z.dim(1), f = z.dim(2);
    const std::size_t e = cfg_.attn_qk_dim, dv = cfg_.head_value_dim();
    const S inv_sqrt = static_cast<S>(1.0 / std::sqrt(static_cast<double>(f * e)));
    std::vector<Tensor<S>> heads;
    for (const auto& head : blk.heads) {
      auto q = frame_vectors(projection(z, head.query));
      auto k = frame_vectors(projection(z, head.key));
      auto v = frame_vectors(projection(z, head.value));
      auto scores = ad::scale(ad::matmul(q, k, false, true), inv_sqrt);
      auto weights = ad::softmax_lastdim(scores);  // [T, T]
      if (trace) trace->attention.push_back(weights);
      auto a = ad::matmul(weights, v);  // [T, F*dv]
      heads.push_back(ad::permute(ad::reshape(a, Shape{t, f, dv}), {2, 0, 1}));
    }
    auto merged = heads.size() == 1 ? heads.front() : ad::concat(heads, 0);
    if (blk.heads.size() > 1) merged = projection(merged, blk.output);
    return ad::add(merged, z);
  }

  /// One full block: intra-frame, sub-band, then attention when enabled.
  Tensor<S> block(const Tensor<S>& r, std::size_t b, ForwardTrace<S>* trace = nullptr) const {
    auto u = intra_frame(r, b);
    auto z = sub_band(u, b);
    return cfg_.use_attention ? attention(z, b, trace) : z;
  }

  /// Embedding [D, T, F] -> C spectrograms [2, T, F].
  std::vector<Tensor<S>> decode(const Tensor<S>& r, const Tensor<S>& mix_spec) const {
    auto out = ad::deconv2d(r, dec_.weight, dec_.bias);
    std::vector<Tensor<S>> specs;
    for (std::size_t c = 0; c < cfg_.num_speakers; ++c) {
      auto planes = ad::slice(out, 0, 2 * c, 2 * c + 2);
      if (cfg_.head_mode == HeadMode::kComplexRatioMask) {
        const S clip = static_cast<S>(cfg_.mask_clip);
        planes = ad::complex_mul(ad::clamp(planes, -clip, clip), mix_spec);
      }
      specs.push_back(planes);
    }
    return specs;
  }

  /// Spectrogram-domain pipeline: mix_spec [2,T,F] -> C spectrograms.
  std::vector<Tensor<S>> separate_spectrogram(const Tensor<S>& mix_spec,
                                              ForwardTrace<S>* trace = nullptr) const {
    auto r = encode(mix_spec);
    for (std::size_t b = 0; b < cfg_.num_blocks; ++b) r = block(r, b, trace);
    return decode(r, mix_spec);
  }

  /// mixture [N] -> C waveforms [N].
  std::vector<Tensor<S>> separate(const Tensor<S>& mix, ForwardTrace<S>* trace = nullptr) const {
    if (mix.rank() != 1) throw std::invalid_argument("separate: expected a 1-D mixture");
    auto spec = plan_.analyze(mix);
    auto specs = separate_spectrogram(spec, trace);
    std::vector<Tensor<S>> out;
    for (const auto& s : specs) out.push_back(plan_.synthesize(s, mix.numel()));
    return out;
  }

 private:
  struct Encoder {
    Tensor<S> weight, bias, gamma, beta;
  };
  struct SequenceModule {
    Tensor<S> norm_gamma, norm_beta;
    ad::LstmDirection<S> fwd, bwd;
    Tensor<S> deconv_weight, deconv_bias;
  };
  struct Projection {
    Tensor<S> weight, bias, slope, gamma, beta;
  };
  struct Head {
    Projection query, key, value;
  };
  struct Block {
    SequenceModule intra, sub;
    std::vector<Head> heads;
    Projection output;
  };
  struct Decoder {
    Tensor<S> weight, bias;
  };

  /// seq [Len, N, D] -> [Len, N, D]: unfold, chanLN, BLSTM, Deconv1D.
  Tensor<S> sequence_module(const Tensor<S>& seq, const SequenceModule& m) const {
    const std::size_t len = seq.dim(0);
    auto x = ad::unfold_seq_batched(seq, cfg_.unfold_kernel, cfg_.unfold_stride);
    x = ad::channel_layer_norm(x, m.norm_gamma, m.norm_beta);
    x = ad::bilstm(x, m.fwd, m.bwd);
    return ad::deconv1d_seq_batched(x, m.deconv_weight, m.deconv_bias, cfg_.unfold_stride, len);
  }

  /// 1x1 Conv2D + PReLU + cfLN on [D, T, F].
  Tensor<S> projection(const Tensor<S>& x, const Projection& p) const {
    auto y = ad::conv2d(x, p.weight, p.bias);
    y = ad::prelu(y, p.slope);
    return ad::cf_layer_norm(y, p.gamma, p.beta);
  }

  /// [C, T, F] -> [T, F*C], element (f, c) at f*C + c.
  static Tensor<S> frame_vectors(const Tensor<S>& x) {
    const std::size_t c = x.dim(0), t = x.dim(1), f = x.dim(2);
    return ad::reshape(ad::permute(x, {1, 2, 0}), Shape{t, f * c});
  }

  void init_parameters(std::mt19937_64& rng) {
    const std::size_t d = cfg_.emb_dim, h = cfg_.lstm_hidden, k = cfg_.unfold_kernel;
    const std::size_t f = cfg_.n_freq, two_c = 2 * cfg_.num_speakers;
    auto& p = params_;
    const auto fan = [](std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); };

    p.add_uniform("encoder.conv.weight", {d, 2, 3, 3}, fan(2 * 9), rng);
    p.add_uniform("encoder.conv.bias", {d}, fan(2 * 9), rng);
    p.add_constant("encoder.norm.gamma", {d}, S(1));
    p.add_constant("encoder.norm.beta", {d}, S(0));

    for (std::size_t b = 0; b < cfg_.num_blocks; ++b) {
      const std::string bp = "block." + std::to_string(b) + ".";
      for (const char* mod : {"intra", "subband"}) {
        const std::string mp = bp + mod + ".";
        const std::size_t in = k * d;
        p.add_constant(mp + "norm.gamma", {in}, S(1));
        p.add_constant(mp + "norm.beta", {in}, S(0));
        for (const char* dir : {"fwd", "bwd"}) {
          const std::string lp = mp + "blstm." + dir + ".";
          p.add_uniform(lp + "w_ih", {4 * h, in}, fan(h), rng);
          p.add_uniform(lp + "w_hh", {4 * h, h}, fan(h), rng);
          std::vector<S> bias(4 * h, S(0));
          std::fill(bias.begin() + static_cast<std::ptrdiff_t>(h),
                    bias.begin() + static_cast<std::ptrdiff_t>(2 * h), S(1));
          p.add(lp + "bias", {4 * h}, std::move(bias));
        }
        p.add_uniform(mp + "deconv.weight", {2 * h, d, k}, fan(2 * h * k), rng);
        p.add_uniform(mp + "deconv.bias", {d}, fan(2 * h * k), rng);
      }
      if (cfg_.use_attention) {
        const auto add_proj = [&](const std::string& pp, std::size_t out) {
          p.add_uniform(pp + "conv.weight", {out, d, 1, 1}, fan(d), rng);
          p.add_uniform(pp + "conv.bias", {out}, fan(d), rng);
          p.add_constant(pp + "prelu", {1}, S(0.25));
          p.add_constant(pp + "norm.gamma", {out, f}, S(1));
          p.add_constant(pp + "norm.beta", {out, f}, S(0));
        };
        for (std::size_t l = 0; l < cfg_.attn_heads; ++l) {
          const std::string hp = bp + "attn.head." + std::to_string(l) + ".";
          add_proj(hp + "query.", cfg_.attn_qk_dim);
          add_proj(hp + "key.", cfg_.attn_qk_dim);
          add_proj(hp + "value.", cfg_.head_value_dim());
        }
        if (cfg_.attn_heads > 1) add_proj(bp + "attn.output.", d);
      }
    }
    p.add_uniform("decoder.deconv.weight", {d, two_c, 3, 3}, fan(d * 9), rng);
    p.add_uniform("decoder.deconv.bias", {two_c}, fan(d * 9), rng);
  }

  void bind() {
    const auto& p = params_;
    enc_ = {p.at("encoder.conv.weight"), p.at("encoder.conv.bias"), p.at("encoder.norm.gamma"),
            p.at("encoder.norm.beta")};
    blocks_.clear();
    for (std::size_t b = 0; b < cfg_.num_blocks; ++b) {
      const std::string bp = "block." + std::to_string(b) + ".";
      Block blk;
      const auto seq = [&](const std::string& mp) {
        const auto dir = [&](const std::string& lp) {
          return ad::LstmDirection<S>{p.at(lp + "w_ih"), p.at(lp + "w_hh"), p.at(lp + "bias")};
        };
        return SequenceModule{p.at(mp + "norm.gamma"),    p.at(mp + "norm.beta"),
                              dir(mp + "blstm.fwd."),     dir(mp + "blstm.bwd."),
                              p.at(mp + "deconv.weight"), p.at(mp + "deconv.bias")};
      };
      blk.intra = seq(bp + "intra.");
      blk.sub = seq(bp + "subband.");
      if (cfg_.use_attention) {
        const auto proj = [&](const std::string& pp) {
          return Projection{p.at(pp + "conv.weight"), p.at(pp + "conv.bias"), p.at(pp + "prelu"),
                            p.at(pp + "norm.gamma"), p.at(pp + "norm.beta")};
        };
        for (std::size_t l = 0; l < cfg_.attn_heads; ++l) {
          const std::string hp = bp + "attn.head." + std::to_string(l) + ".";
          blk.heads.push_back({proj(hp + "query."), proj(hp + "key."), proj(hp + "value.")});
        }
        if (cfg_.attn_heads > 1) blk.output = proj(bp + "attn.output.");
      }
      blocks_.push_back(std::move(blk));
    }
    dec_ = {p.at("decoder.deconv.weight"), p.at("decoder.deconv.bias")};
  }

  ModelConfig cfg_;
  signal::StftPlan<S> plan_;
  ad::ParameterSet<S> params_;
  Encoder enc_;
  std::vector<Block> blocks_;
  Decoder dec_;
};

/// Waveform-level convenience wrapper around TfGridNet::separate.
template <class S>
std::vector<signal::Waveform> forward_separate(const signal::Waveform& mix, const TfGridNet<S>& net) {
  ad::NoGradScope no_grad;
  const std::size_t n = mix.samples.size();
  auto outs = net.separate(Tensor<S>(Shape{n}, std::vector<S>(mix.samples.begin(), mix.samples.end())));
  std::vector<signal::Waveform> res;
  for (const auto& o : outs)
    res.push_back({std::vector<double>(o.data().begin(), o.data().end()), mix.sample_rate});
  return res;
}

}  // namespace gridsep::model
