// gridsep/adcore/layers.hpp

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

// Differentiable layer primitives. Every kernel here is a single tape record
// with a hand-written backward pass; the heavy ones (BLSTM, convolutions) are
// expressed as GEMMs so they stay fast at 32-bit.
//
// Sequence batches use a time-major layout [Len, N, C]: N independent
// sequences of length Len with C features, C contiguous.

#pragma once

#include <array>
#include <memory>

#include "gridsep/adcore/ops.hpp"

namespace gridsep::ad {

inline constexpr double kNormEps = 1e-5;

// ---------------------------------------------------------------------------
// Unfold / Deconv1D

/// Padded length and number of windows for a sliding window of `kernel`
/// with `stride` over `len` steps. A window starts at every stride step, so
/// there are ceil(len / stride) of them; the tail is zero-padded on the right.
struct UnfoldGeometry {
  std::size_t padded;
  std::size_t windows;

  static UnfoldGeometry of(std::size_t len, std::size_t kernel, std::size_t stride) {
    const std::size_t windows = (len + stride - 1) / stride;
    return {(windows - 1) * stride + kernel, windows};
  }
};

namespace detail {
inline void check_unfold_args(std::size_t len, std::size_t kernel, std::size_t stride,
                              const char* op) {
  if (kernel < 1 || stride < 1)
    throw AdError(std::string(op) + ": kernel and stride must be >= 1");
  if (kernel < stride)
    throw AdError(std::string(op) + ": kernel < stride would drop steps irrecoverably");
  if (len == 0) throw AdError(std::string(op) + ": empty sequence");
}
}  // namespace detail

/// Batched unfold: x [Len, N, C] -> [Lout, N, kernel*C].
/// Window k stacks steps k*stride .. k*stride+kernel-1, channel-major
/// (feature index c*kernel + i).
template <class S>
Tensor<S> unfold_seq_batched(const Tensor<S>& x, std::size_t kernel, std::size_t stride) {
  detail::require_rank(x, 3, "unfold_seq");
  const std::size_t len = x.dim(0), n = x.dim(1), c = x.dim(2);
  detail::check_unfold_args(len, kernel, stride, "unfold_seq");
  const auto geo = UnfoldGeometry::of(len, kernel, stride);
  const std::size_t lout = geo.windows, fo = kernel * c;
  Tensor<S> out(Shape{lout, n, fo});
  auto y = out.mutable_data();
  const auto xv = x.data();
  for (std::size_t k = 0; k < lout; ++k)
    for (std::size_t i = 0; i < kernel; ++i) {
      const std::size_t src = k * stride + i;
      if (src >= len) continue;
      for (std::size_t s = 0; s < n; ++s) {
        const S* in = xv.data() + (src * n + s) * c;
        S* o = y.data() + (k * n + s) * fo + i;
        for (std::size_t ch = 0; ch < c; ++ch) o[ch * kernel] = in[ch];
      }
    }
  if (Tape* tape = detail::recording_tape({&x})) {
    detail::mark_output(out, *tape);
    tape->record("unfold_seq", [xn = x.node(), on = out.node(), len, n, c, kernel, stride,
                                lout, fo] {
      if (on->grad.empty() || !xn->requires_grad) return;
      auto& gx = xn->ensure_grad();
      for (std::size_t k = 0; k < lout; ++k)
        for (std::size_t i = 0; i < kernel; ++i) {
          const std::size_t src = k * stride + i;
          if (src >= len) continue;
          for (std::size_t s = 0; s < n; ++s) {
            S* g = gx.data() + (src * n + s) * c;
            const S* go = on->grad.data() + (k * n + s) * fo + i;
            for (std::size_t ch = 0; ch < c; ++ch) g[ch] += go[ch * kernel];
          }
        }
    });
  }
  return out;
}

/// x [D, F] -> [kernel*D, F_out]; see unfold_seq_batched for the layout.
template <class S>
Tensor<S> unfold_seq(const Tensor<S>& x, std::size_t kernel, std::size_t stride) {
  detail::require_rank(x, 2, "unfold_seq");
  const std::size_t d = x.dim(0), f = x.dim(1);
  detail::check_unfold_args(f, kernel, stride, "unfold_seq");
  auto seq = reshape(permute(x, {1, 0}), Shape{f, 1, d});
  auto u = unfold_seq_batched(seq, kernel, stride);
  const std::size_t lout = u.dim(0);
  return permute(reshape(u, Shape{lout, kernel * d}), {1, 0});
}

/// Batched transposed 1-D convolution: x [Lout, N, Cin], weight [Cin, Cout, kernel],
/// bias [Cout] -> [out_len, N, Cout]. Overlapping windows sum; the full
/// length (Lout-1)*stride + kernel is cropped on the right to out_len.
template <class S>
Tensor<S> deconv1d_seq_batched(const Tensor<S>& x, const Tensor<S>& weight,
                               const Tensor<S>& bias, std::size_t stride,
                               std::size_t out_len) {
  detail::require_rank(x, 3, "deconv1d_seq");
  detail::require_rank(weight, 3, "deconv1d_seq");
  const std::size_t lout = x.dim(0), n = x.dim(1), cin = x.dim(2);
  const std::size_t cout = weight.dim(1), kernel = weight.dim(2);
  if (weight.dim(0) != cin)
    throw AdError("deconv1d_seq: input has " + std::to_string(cin) +
                  " channels but weight expects " + std::to_string(weight.dim(0)));
  if (bias.numel() != cout) throw AdError("deconv1d_seq: bias size mismatch");
  if (stride < 1 || kernel < 1) throw AdError("deconv1d_seq: kernel and stride must be >= 1");
  const std::size_t full = (lout - 1) * stride + kernel;
  if (out_len > full || out_len == 0)
    throw AdError("deconv1d_seq: cannot crop length " + std::to_string(full) + " to " +
                  std::to_string(out_len));
  const std::size_t ck = cout * kernel;

  CMapR<S> X(x.data().data(), lout * n, cin);
  CMapR<S> W(weight.data().data(), cin, ck);
  MatR<S> Y = X * W;  // row (k, s), column co*kernel + i

  Tensor<S> out(Shape{out_len, n, cout});
  auto o = out.mutable_data();
  const auto b = bias.data();
  for (std::size_t p = 0; p < out_len; ++p)
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t co = 0; co < cout; ++co) o[(p * n + s) * cout + co] = b[co];
  for (std::size_t k = 0; k < lout; ++k)
    for (std::size_t i = 0; i < kernel; ++i) {
      const std::size_t p = k * stride + i;
      if (p >= out_len) continue;
      for (std::size_t s = 0; s < n; ++s) {
        const S* yr = Y.data() + (k * n + s) * ck + i;
        S* orow = o.data() + (p * n + s) * cout;
        for (std::size_t co = 0; co < cout; ++co) orow[co] += yr[co * kernel];
      }
    }

  if (Tape* tape = detail::recording_tape({&x, &weight, &bias})) {
    detail::mark_output(out, *tape);
    tape->record("deconv1d_seq", [xn = x.node(), wn = weight.node(), bn = bias.node(),
                                  on = out.node(), lout, n, cin, cout, kernel, stride,
                                  out_len, ck] {
      if (on->grad.empty()) return;
      const auto& go = on->grad;
      MatR<S> dY = MatR<S>::Zero(lout * n, ck);
      for (std::size_t k = 0; k < lout; ++k)
        for (std::size_t i = 0; i < kernel; ++i) {
          const std::size_t p = k * stride + i;
          if (p >= out_len) continue;
          for (std::size_t s = 0; s < n; ++s) {
            S* dyr = dY.data() + (k * n + s) * ck + i;
            const S* gr = go.data() + (p * n + s) * cout;
            for (std::size_t co = 0; co < cout; ++co) dyr[co * kernel] = gr[co];
          }
        }
      if (bn->requires_grad) {
        auto& gb = bn->ensure_grad();
        for (std::size_t r = 0; r < out_len * n; ++r)
          for (std::size_t co = 0; co < cout; ++co) gb[co] += go[r * cout + co];
      }
      if (wn->requires_grad) {
        CMapR<S> X(xn->value.data(), lout * n, cin);
        MapR<S> GW(wn->ensure_grad().data(), cin, ck);
        GW.noalias() += X.transpose() * dY;
      }
      if (xn->requires_grad) {
        CMapR<S> W(wn->value.data(), cin, ck);
        MapR<S> GX(xn->ensure_grad().data(), lout * n, cin);
        GX.noalias() += dY * W.transpose();
      }
    });
  }
  return out;
}

/// x [Cin, F_out], weight [Cin, Cout, kernel], bias [Cout] -> [Cout, out_len].
template <class S>
Tensor<S> deconv1d_seq(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias,
                       std::size_t stride, std::size_t out_len) {
  detail::require_rank(x, 2, "deconv1d_seq");
  const std::size_t cin = x.dim(0), fo = x.dim(1);
  auto seq = reshape(permute(x, {1, 0}), Shape{fo, 1, cin});
  auto y = deconv1d_seq_batched(seq, weight, bias, stride, out_len);
  return permute(reshape(y, Shape{out_len, y.dim(2)}), {1, 0});
}

// ---------------------------------------------------------------------------
// BLSTM

/// Weights of one LSTM direction. Gate order along the 4H axis: input,
/// forget, cell, output.
template <class S>
struct LstmDirection {
  Tensor<S> w_ih;  // [4H, Cin]
  Tensor<S> w_hh;  // [4H, H]
  Tensor<S> bias;  // [4H]

  std::size_t hidden() const { return w_hh.dim(1); }
  std::size_t input_size() const { return w_ih.dim(1); }
};

namespace detail {

template <class S>
struct LstmTrace {
  MatR<S> acts;  // [Len*N, 4H] post-activation gates
  MatR<S> cell;  // [Len*N, H]
  MatR<S> tanh_cell;
  MatR<S> hidden;
};

template <class S>
void lstm_forward(const CMapR<S>& X, const LstmDirection<S>& p, std::size_t len,
                  std::size_t n, bool reverse, LstmTrace<S>& tr) {
  const Eigen::Index h = static_cast<Eigen::Index>(p.hidden());
  CMapR<S> Wih(p.w_ih.data().data(), 4 * h, X.cols());
  CMapR<S> Whh(p.w_hh.data().data(), 4 * h, h);
  Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>> b(p.bias.data().data(), 4 * h);
  const Eigen::Index rows = static_cast<Eigen::Index>(len * n);
  const Eigen::Index nn = static_cast<Eigen::Index>(n);
  tr.acts.resize(rows, 4 * h);
  tr.acts.noalias() = X * Wih.transpose();
  tr.acts.rowwise() += b;
  tr.cell.resize(rows, h);
  tr.tanh_cell.resize(rows, h);
  tr.hidden.resize(rows, h);
  for (std::size_t s = 0; s < len; ++s) {
    const std::size_t t = reverse ? len - 1 - s : s;
    const Eigen::Index r0 = static_cast<Eigen::Index>(t) * nn;
    auto G = tr.acts.middleRows(r0, nn);
    if (s > 0) {
      const std::size_t tp = reverse ? t + 1 : t - 1;
      G.noalias() += tr.hidden.middleRows(static_cast<Eigen::Index>(tp) * nn, nn) *
                     Whh.transpose();
    }
    G.leftCols(2 * h) = G.leftCols(2 * h).array().logistic().matrix();
    G.middleCols(2 * h, h) = G.middleCols(2 * h, h).array().tanh().matrix();
    G.rightCols(h) = G.rightCols(h).array().logistic().matrix();
    auto C = tr.cell.middleRows(r0, nn);
    if (s > 0) {
      const std::size_t tp = reverse ? t + 1 : t - 1;
      C = (G.middleCols(h, h).array() *
               tr.cell.middleRows(static_cast<Eigen::Index>(tp) * nn, nn).array() +
           G.leftCols(h).array() * G.middleCols(2 * h, h).array())
              .matrix();
    } else {
      C = (G.leftCols(h).array() * G.middleCols(2 * h, h).array()).matrix();
    }
    auto TC = tr.tanh_cell.middleRows(r0, nn);
    TC = C.array().tanh().matrix();
    tr.hidden.middleRows(r0, nn) = (G.rightCols(h).array() * TC.array()).matrix();
  }
}

}  // namespace detail

/// One-layer bidirectional LSTM over a sequence batch:
/// x [Len, N, Cin] -> [Len, N, 2H], forward-direction features first.
template <class S>
Tensor<S> bilstm(const Tensor<S>& x, const LstmDirection<S>& fwd, const LstmDirection<S>& bwd) {
  detail::require_rank(x, 3, "bilstm");
  const std::size_t len = x.dim(0), n = x.dim(1), cin = x.dim(2);
  if (len == 0 || n == 0) throw AdError("bilstm: empty sequence");
  const std::size_t h = fwd.hidden();
  for (const auto* p : {&fwd, &bwd}) {
    if (p->w_ih.rank() != 2 || p->w_ih.dim(0) != 4 * h || p->w_ih.dim(1) != cin ||
        p->w_hh.rank() != 2 || p->w_hh.dim(0) != 4 * h || p->w_hh.dim(1) != h ||
        p->bias.numel() != 4 * h)
      throw AdError("bilstm: parameter shapes do not match input " + to_string(x.shape()) +
                    " and hidden size " + std::to_string(h));
  }
  CMapR<S> X(x.data().data(), len * n, cin);
  auto traces = std::make_shared<std::array<detail::LstmTrace<S>, 2>>();
  detail::lstm_forward(X, fwd, len, n, false, (*traces)[0]);
  detail::lstm_forward(X, bwd, len, n, true, (*traces)[1]);

  Tensor<S> out(Shape{len, n, 2 * h});
  MapR<S> Y(out.mutable_data().data(), len * n, 2 * h);
  Y.leftCols(h) = (*traces)[0].hidden;
  Y.rightCols(h) = (*traces)[1].hidden;

  if (Tape* tape = detail::recording_tape<S>(
          {&x, &fwd.w_ih, &fwd.w_hh, &fwd.bias, &bwd.w_ih, &bwd.w_hh, &bwd.bias})) {
    detail::mark_output(out, *tape);
    tape->record("bilstm", [xn = x.node(), fwd, bwd, on = out.node(), traces, len, n, cin,
                            h] {
      if (on->grad.empty()) return;
      const Eigen::Index H = static_cast<Eigen::Index>(h);
      const Eigen::Index nn = static_cast<Eigen::Index>(n);
      const Eigen::Index rows = static_cast<Eigen::Index>(len * n);
      CMapR<S> X(xn->value.data(), rows, cin);
      CMapR<S> dY(on->grad.data(), rows, 2 * h);
      for (int dir = 0; dir < 2; ++dir) {
        const LstmDirection<S>& p = dir == 0 ? fwd : bwd;
        const bool reverse = dir == 1;
        const auto& tr = (*traces)[dir];
        CMapR<S> Wih(p.w_ih.data().data(), 4 * H, cin);
        CMapR<S> Whh(p.w_hh.data().data(), 4 * H, H);
        MatR<S> dG(rows, 4 * H);
        MatR<S> dh_next = MatR<S>::Zero(nn, H);
        std::vector<S> dc_next(static_cast<std::size_t>(nn * H), S(0));
        for (std::size_t s = len; s-- > 0;) {
          const std::size_t t = reverse ? len - 1 - s : s;
          const std::size_t tp = reverse ? t + 1 : t - 1;  // valid when s > 0
          for (Eigen::Index r = 0; r < nn; ++r) {
            const Eigen::Index row = static_cast<Eigen::Index>(t) * nn + r;
            const S* a = tr.acts.row(row).data();
            const S* tc = tr.tanh_cell.row(row).data();
            const S* cp = s > 0 ? tr.cell.row(static_cast<Eigen::Index>(tp) * nn + r).data() : nullptr;
            const S* dy = dY.row(row).data() + dir * H;
            const S* dhn = dh_next.row(r).data();
            S* dcn = dc_next.data() + r * H;
            S* dg = dG.row(row).data();
            for (Eigen::Index j = 0; j < H; ++j) {
              const S gi = a[j], gf = a[H + j], gg = a[2 * H + j], go = a[3 * H + j];
              const S dh = dy[j] + dhn[j];
              const S dc = dh * go * (S(1) - tc[j] * tc[j]) + dcn[j];
              dg[j] = dc * gg * gi * (S(1) - gi);
              dg[H + j] = cp ? dc * cp[j] * gf * (S(1) - gf) : S(0);
              dg[2 * H + j] = dc * gi * (S(1) - gg * gg);
              dg[3 * H + j] = dh * tc[j] * go * (S(1) - go);
              dcn[j] = dc * gf;
            }
          }
          dh_next.noalias() = dG.middleRows(static_cast<Eigen::Index>(t) * nn, nn) * Whh;
        }
        if (p.w_hh.requires_grad()) {
          // Step t pairs with h_{t-1} (forward) or h_{t+1} (reverse); the
          // first processed step has a zero predecessor.
          MapR<S> GWhh(p.w_hh.node()->ensure_grad().data(), 4 * H, H);
          const Eigen::Index tail = rows - nn;
          if (tail > 0) {
            if (!reverse)
              GWhh.noalias() += dG.bottomRows(tail).transpose() * tr.hidden.topRows(tail);
            else
              GWhh.noalias() += dG.topRows(tail).transpose() * tr.hidden.bottomRows(tail);
          }
        }
        if (p.w_ih.requires_grad()) {
          MapR<S> GWih(p.w_ih.node()->ensure_grad().data(), 4 * H, cin);
          GWih.noalias() += dG.transpose() * X;
        }
        if (p.bias.requires_grad()) {
          Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>> gb(p.bias.node()->ensure_grad().data(),
                                                             4 * H);
          gb.noalias() += Eigen::Matrix<S, 1, Eigen::Dynamic>::Ones(rows) * dG;
        }
        if (xn->requires_grad) {
          MapR<S> GX(xn->ensure_grad().data(), rows, cin);
          GX.noalias() += dG * Wih;
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// 2-D convolution (stride 1, "same" zero padding, odd square kernels)

namespace detail {

/// im2col for x [Cin, T, F] and a k x k kernel: [Cin*k*k, T*F].
template <class S>
MatR<S> im2col(const S* x, std::size_t cin, std::size_t t, std::size_t f, std::size_t k) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  MatR<S> cols = MatR<S>::Zero(static_cast<Eigen::Index>(cin * k * k),
                               static_cast<Eigen::Index>(t * f));
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) {
        S* row = cols.data() + ((c * k + a) * k + b) * t * f;
        for (std::size_t ti = 0; ti < t; ++ti) {
          const std::ptrdiff_t ts = static_cast<std::ptrdiff_t>(ti) + static_cast<std::ptrdiff_t>(a) - pad;
          if (ts < 0 || ts >= static_cast<std::ptrdiff_t>(t)) continue;
          for (std::size_t fi = 0; fi < f; ++fi) {
            const std::ptrdiff_t fs = static_cast<std::ptrdiff_t>(fi) + static_cast<std::ptrdiff_t>(b) - pad;
            if (fs < 0 || fs >= static_cast<std::ptrdiff_t>(f)) continue;
            row[ti * f + fi] = x[(c * t + static_cast<std::size_t>(ts)) * f + static_cast<std::size_t>(fs)];
          }
        }
      }
  return cols;
}

template <class S>
void col2im_add(const MatR<S>& cols, S* gx, std::size_t cin, std::size_t t, std::size_t f,
                std::size_t k) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) {
        const S* row = cols.data() + ((c * k + a) * k + b) * t * f;
        for (std::size_t ti = 0; ti < t; ++ti) {
          const std::ptrdiff_t ts = static_cast<std::ptrdiff_t>(ti) + static_cast<std::ptrdiff_t>(a) - pad;
          if (ts < 0 || ts >= static_cast<std::ptrdiff_t>(t)) continue;
          for (std::size_t fi = 0; fi < f; ++fi) {
            const std::ptrdiff_t fs = static_cast<std::ptrdiff_t>(fi) + static_cast<std::ptrdiff_t>(b) - pad;
            if (fs < 0 || fs >= static_cast<std::ptrdiff_t>(f)) continue;
            gx[(c * t + static_cast<std::size_t>(ts)) * f + static_cast<std::size_t>(fs)] += row[ti * f + fi];
          }
        }
      }
}

}  // namespace detail

/// Cross-correlation x [Cin, T, F] * weight [Cout, Cin, k, k] + bias [Cout]
/// -> [Cout, T, F], zero padding k/2 on both spatial axes.
template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias) {
  detail::require_rank(x, 3, "conv2d");
  detail::require_rank(weight, 4, "conv2d");
  const std::size_t cin = x.dim(0), t = x.dim(1), f = x.dim(2);
  const std::size_t cout = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != cin)
    throw AdError("conv2d: input has " + std::to_string(cin) + " channels, weight expects " +
                  std::to_string(weight.dim(1)));
  if (weight.dim(3) != k || k % 2 == 0) throw AdError("conv2d: kernel must be square and odd");
  if (bias.numel() != cout) throw AdError("conv2d: bias size mismatch");
  const Eigen::Index tf = static_cast<Eigen::Index>(t * f);
  const Eigen::Index ck = static_cast<Eigen::Index>(cin * k * k);

  Tensor<S> out(Shape{cout, t, f});
  MapR<S> Y(out.mutable_data().data(), cout, tf);
  CMapR<S> W(weight.data().data(), cout, ck);
  std::shared_ptr<MatR<S>> cols;
  if (k == 1) {
    CMapR<S> X(x.data().data(), cin, tf);
    Y.noalias() = W * X;
  } else {
    cols = std::make_shared<MatR<S>>(detail::im2col(x.data().data(), cin, t, f, k));
    Y.noalias() = W * *cols;
  }
  for (std::size_t co = 0; co < cout; ++co) Y.row(co).array() += bias[co];

  if (Tape* tape = detail::recording_tape({&x, &weight, &bias})) {
    detail::mark_output(out, *tape);
    tape->record("conv2d", [xn = x.node(), wn = weight.node(), bn = bias.node(),
                            on = out.node(), cols, cin, cout, t, f, k, tf, ck] {
      if (on->grad.empty()) return;
      CMapR<S> G(on->grad.data(), cout, tf);
      if (bn->requires_grad) {
        auto& gb = bn->ensure_grad();
        for (std::size_t co = 0; co < cout; ++co) gb[co] += G.row(co).sum();
      }
      if (wn->requires_grad) {
        MapR<S> GW(wn->ensure_grad().data(), cout, ck);
        if (k == 1) GW.noalias() += G * CMapR<S>(xn->value.data(), cin, tf).transpose();
        else GW.noalias() += G * cols->transpose();
      }
      if (xn->requires_grad) {
        CMapR<S> W(wn->value.data(), cout, ck);
        if (k == 1) {
          MapR<S> GX(xn->ensure_grad().data(), cin, tf);
          GX.noalias() += W.transpose() * G;
        } else {
          MatR<S> dcols = W.transpose() * G;
          detail::col2im_add(dcols, xn->ensure_grad().data(), cin, t, f, k);
        }
      }
    });
  }
  return out;
}

/// Transposed convolution, stride 1, padding k/2: x [Cin, T, F],
/// weight [Cin, Cout, k, k] (transposed-conv layout), bias [Cout] -> [Cout, T, F].
template <class S>
Tensor<S> deconv2d(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias) {
  detail::require_rank(weight, 4, "deconv2d");
  detail::require_rank(x, 3, "deconv2d");
  const std::size_t cin = weight.dim(0), cout = weight.dim(1), k = weight.dim(2);
  if (x.dim(0) != cin)
    throw AdError("deconv2d: input has " + std::to_string(x.dim(0)) +
                  " channels, weight expects " + std::to_string(cin));
  if (weight.dim(3) != k) throw AdError("deconv2d: kernel must be square");
  // Equivalent cross-correlation kernel: W'[co][ci][a][b] = W[ci][co][k-1-a][k-1-b].
  std::vector<std::size_t> map(cin * cout * k * k);
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b)
          map[((co * cin + ci) * k + a) * k + b] =
              ((ci * cout + co) * k + (k - 1 - a)) * k + (k - 1 - b);
  auto w = gather(weight, Shape{cout, cin, k, k}, std::move(map), "deconv2d_kernel");
  return conv2d(x, w, bias);
}

// ---------------------------------------------------------------------------
// Normalization

enum class NormKind { kGlobal, kChannel, kChannelFrequency };

namespace detail {

/// Normalizes each of `rows` contiguous rows of length `cols` to zero mean
/// and unit variance, then applies gamma/beta indexed by affine_of[col].
template <class S>
Tensor<S> row_norm(const Tensor<S>& x, std::size_t rows, std::size_t cols,
                   const Tensor<S>& gamma, const Tensor<S>& beta,
                   std::shared_ptr<const std::vector<std::size_t>> affine_of,
                   std::string_view name) {
  if (cols == 0 || rows == 0) throw AdError(std::string(name) + ": zero-size normalization axis");
  Tensor<S> out(x.shape());
  auto y = out.mutable_data();
  const auto xv = x.data();
  const auto g = gamma.data();
  const auto be = beta.data();
  auto xhat = std::make_shared<std::vector<S>>(xv.size());
  auto inv_std = std::make_shared<std::vector<S>>(rows);
  const auto& amap = *affine_of;
  for (std::size_t r = 0; r < rows; ++r) {
    const S* xr = xv.data() + r * cols;
    double mean = 0;
    for (std::size_t c = 0; c < cols; ++c) mean += xr[c];
    mean /= static_cast<double>(cols);
    double var = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = xr[c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const S is = static_cast<S>(1.0 / std::sqrt(var + kNormEps));
    (*inv_std)[r] = is;
    S* hr = xhat->data() + r * cols;
    S* yr = y.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      hr[c] = (xr[c] - static_cast<S>(mean)) * is;
      yr[c] = g[amap[c]] * hr[c] + be[amap[c]];
    }
  }
  if (Tape* tape = recording_tape({&x, &gamma, &beta})) {
    mark_output(out, *tape);
    tape->record(name, [xn = x.node(), gn = gamma.node(), bn = beta.node(), on = out.node(),
                        xhat, inv_std, affine_of, rows, cols] {
      if (on->grad.empty()) return;
      const auto& dy = on->grad;
      const auto& amap = *affine_of;
      if (gn->requires_grad) {
        auto& gg = gn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c)
            gg[amap[c]] += dy[r * cols + c] * (*xhat)[r * cols + c];
      }
      if (bn->requires_grad) {
        auto& gb = bn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) gb[amap[c]] += dy[r * cols + c];
      }
      if (xn->requires_grad) {
        auto& gx = xn->ensure_grad();
        const auto& gam = gn->value;
        for (std::size_t r = 0; r < rows; ++r) {
          double m1 = 0, m2 = 0;
          for (std::size_t c = 0; c < cols; ++c) {
            const double dh = static_cast<double>(dy[r * cols + c]) * gam[amap[c]];
            m1 += dh;
            m2 += dh * (*xhat)[r * cols + c];
          }
          m1 /= static_cast<double>(cols);
          m2 /= static_cast<double>(cols);
          const S is = (*inv_std)[r];
          for (std::size_t c = 0; c < cols; ++c) {
            const double dh = static_cast<double>(dy[r * cols + c]) * gam[amap[c]];
            gx[r * cols + c] +=
                static_cast<S>(is * (dh - m1 - (*xhat)[r * cols + c] * m2));
          }
        }
      }
    });
  }
  return out;
}

}  // namespace detail

/// gLN: statistics over every element of x [C, ...]; per-channel affine [C].
template <class S>
Tensor<S> global_layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta) {
  if (x.rank() < 1 || x.numel() == 0) throw AdError("gLN: zero-size normalization axis");
  const std::size_t c = x.dim(0), per = x.numel() / c;
  if (gamma.numel() != c || beta.numel() != c) throw AdError("gLN: affine must have C entries");
  auto map = std::make_shared<std::vector<std::size_t>>(x.numel());
  for (std::size_t i = 0; i < map->size(); ++i) (*map)[i] = i / per;
  return detail::row_norm(x, 1, x.numel(), gamma, beta, std::move(map), "gLN");
}

/// chanLN: statistics over the last axis of x [..., C] at every position.
template <class S>
Tensor<S> channel_layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta) {
  if (x.rank() < 1 || x.shape().back() == 0) throw AdError("chanLN: zero-size normalization axis");
  const std::size_t c = x.shape().back();
  if (gamma.numel() != c || beta.numel() != c) throw AdError("chanLN: affine must have C entries");
  auto map = std::make_shared<std::vector<std::size_t>>(c);
  std::iota(map->begin(), map->end(), std::size_t{0});
  return detail::row_norm(x, x.numel() / c, c, gamma, beta, std::move(map), "chanLN");
}

/// cfLN: x [C, T, F]; statistics over (C, F) for each frame; affine [C, F].
template <class S>
Tensor<S> cf_layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta) {
  detail::require_rank(x, 3, "cfLN");
  const std::size_t c = x.dim(0), t = x.dim(1), f = x.dim(2);
  if (c * f == 0 || t == 0) throw AdError("cfLN: zero-size normalization axis");
  if (gamma.numel() != c * f || beta.numel() != c * f)
    throw AdError("cfLN: affine must have C*F entries");
  auto map = std::make_shared<std::vector<std::size_t>>(c * f);
  std::iota(map->begin(), map->end(), std::size_t{0});
  auto frames = permute(x, {1, 0, 2});  // [T, C, F]
  auto y = detail::row_norm(frames, t, c * f, gamma, beta, std::move(map), "cfLN");
  return permute(y, {1, 0, 2});
}

template <class S>
Tensor<S> norm_layer(const Tensor<S>& x, NormKind kind, const Tensor<S>& gamma,
                     const Tensor<S>& beta) {
  switch (kind) {
    case NormKind::kGlobal: return global_layer_norm(x, gamma, beta);
    case NormKind::kChannel: return channel_layer_norm(x, gamma, beta);
    case NormKind::kChannelFrequency: return cf_layer_norm(x, gamma, beta);
  }
  throw AdError("norm_layer: unknown kind");
}

// ---------------------------------------------------------------------------
// Activations

/// Row-wise softmax over the last axis (max-subtracted).
template <class S>
Tensor<S> softmax_lastdim(const Tensor<S>& x) {
  if (x.rank() < 1 || x.shape().back() == 0) throw AdError("softmax: empty last axis");
  const std::size_t k = x.shape().back(), rows = x.numel() / k;
  Tensor<S> out(x.shape());
  auto y = out.mutable_data();
  const auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const S* xr = xv.data() + r * k;
    S* yr = y.data() + r * k;
    const S mx = *std::max_element(xr, xr + k);
    S z = 0;
    for (std::size_t j = 0; j < k; ++j) z += (yr[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < k; ++j) yr[j] /= z;
  }
  if (Tape* tape = detail::recording_tape({&x})) {
    detail::mark_output(out, *tape);
    tape->record("softmax", [xn = x.node(), on = out.node(), rows, k] {
      if (on->grad.empty() || !xn->requires_grad) return;
      auto& gx = xn->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const S* yr = on->value.data() + r * k;
        const S* gr = on->grad.data() + r * k;
        S dotv = 0;
        for (std::size_t j = 0; j < k; ++j) dotv += yr[j] * gr[j];
        for (std::size_t j = 0; j < k; ++j) gx[r * k + j] += yr[j] * (gr[j] - dotv);
      }
    });
  }
  return out;
}

/// PReLU with a single learnable slope `slope` (shape [1]).
template <class S>
Tensor<S> prelu(const Tensor<S>& x, const Tensor<S>& slope) {
  detail::require_scalar(slope, "prelu");
  const S a = slope[0];
  Tensor<S> out(x.shape());
  auto y = out.mutable_data();
  const auto xv = x.data();
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] >= 0 ? xv[i] : a * xv[i];
  if (Tape* tape = detail::recording_tape({&x, &slope})) {
    detail::mark_output(out, *tape);
    tape->record("prelu", [xn = x.node(), sn = slope.node(), on = out.node()] {
      if (on->grad.empty()) return;
      const auto& g = on->grad;
      const auto& xv = xn->value;
      if (xn->requires_grad) {
        auto& gx = xn->ensure_grad();
        const S a = sn->value[0];
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += xv[i] >= 0 ? g[i] : a * g[i];
      }
      if (sn->requires_grad) {
        S acc = 0;
        for (std::size_t i = 0; i < g.size(); ++i)
          if (xv[i] < 0) acc += g[i] * xv[i];
        sn->ensure_grad()[0] += acc;
      }
    });
  }
  return out;
}

/// Complex product of two [2, ...] tensors holding (real, imaginary) planes.
template <class S>
Tensor<S> complex_mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a, b, "complex_mul");
  if (a.rank() < 1 || a.dim(0) != 2) throw AdError("complex_mul: leading axis must be 2");
  const std::size_t n = a.numel() / 2;
  Tensor<S> out(a.shape());
  auto y = out.mutable_data();
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = av[i] * bv[i] - av[n + i] * bv[n + i];
    y[n + i] = av[i] * bv[n + i] + av[n + i] * bv[i];
  }
  if (Tape* tape = detail::recording_tape({&a, &b})) {
    detail::mark_output(out, *tape);
    tape->record("complex_mul", [an = a.node(), bn = b.node(), on = out.node(), n] {
      if (on->grad.empty()) return;
      const auto& g = on->grad;
      const auto& av = an->value;
      const auto& bv = bn->value;
      // dL/dRe(a) = gr*br + gi*bi ; dL/dIm(a) = -gr*bi + gi*br
      if (an->requires_grad) {
        auto& ga = an->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          ga[i] += g[i] * bv[i] + g[n + i] * bv[n + i];
          ga[n + i] += -g[i] * bv[n + i] + g[n + i] * bv[i];
        }
      }
      if (bn->requires_grad) {
        auto& gb = bn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          gb[i] += g[i] * av[i] + g[n + i] * av[n + i];
          gb[n + i] += -g[i] * av[n + i] + g[n + i] * av[i];
        }
      }
    });
  }
  return out;
}

}  // namespace gridsep::ad
