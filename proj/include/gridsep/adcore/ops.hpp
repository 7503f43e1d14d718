// gridsep/adcore/ops.hpp

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

#include <Eigen/Core>

#include "gridsep/adcore/tensor.hpp"

namespace gridsep::ad {

template <class S>
using MatR = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using MapR = Eigen::Map<MatR<S>>;
template <class S>
using CMapR = Eigen::Map<const MatR<S>>;

namespace detail {

template <class S>
void require_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.shape() != b.shape())
    throw AdError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                  to_string(b.shape()));
}

template <class S>
void require_rank(const Tensor<S>& a, std::size_t rank, const char* op) {
  if (a.rank() != rank)
    throw AdError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                  to_string(a.shape()));
}

template <class S>
void require_scalar(const Tensor<S>& a, const char* op) {
  if (a.numel() != 1) throw AdError(std::string(op) + ": expected a scalar tensor");
}

inline std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> st(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) st[i - 1] = st[i] * shape[i];
  return st;
}

/// Elementwise unary op given f(x) and df/dx expressed through (x, y).
template <class S, class F, class DF>
Tensor<S> unary(const Tensor<S>& a, std::string_view name, F f, DF df) {
  Tensor<S> out(a.shape());
  auto y = out.mutable_data();
  const auto x = a.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  if (Tape* tape = recording_tape({&a})) {
    mark_output(out, *tape);
    tape->record(name, [an = a.node(), on = out.node(), df] {
      if (on->grad.empty() || !an->requires_grad) return;
      auto& ga = an->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i)
        ga[i] += on->grad[i] * df(an->value[i], on->value[i]);
    });
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a, b, "add");
  Tensor<S> out(a.shape());
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] + b[i];
  if (Tape* tape = detail::recording_tape({&a, &b})) {
    detail::mark_output(out, *tape);
    tape->record("add", [an = a.node(), bn = b.node(), on = out.node()] {
      if (on->grad.empty()) return;
      detail::accumulate<S>(*an, on->grad);
      detail::accumulate<S>(*bn, on->grad);
    });
  }
  return out;
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor<S> out(a.shape());
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] - b[i];
  if (Tape* tape = detail::recording_tape({&a, &b})) {
    detail::mark_output(out, *tape);
    tape->record("sub", [an = a.node(), bn = b.node(), on = out.node()] {
      if (on->grad.empty()) return;
      detail::accumulate<S>(*an, on->grad);
      if (bn->requires_grad) {
        auto& gb = bn->ensure_grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= on->grad[i];
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor<S> out(a.shape());
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * b[i];
  if (Tape* tape = detail::recording_tape({&a, &b})) {
    detail::mark_output(out, *tape);
    tape->record("mul", [an = a.node(), bn = b.node(), on = out.node()] {
      if (on->grad.empty()) return;
      const auto& g = on->grad;
      if (an->requires_grad) {
        auto& ga = an->ensure_grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        auto& gb = bn->ensure_grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * an->value[i];
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a, b, "div");
  Tensor<S> out(a.shape());
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] / b[i];
  if (Tape* tape = detail::recording_tape({&a, &b})) {
    detail::mark_output(out, *tape);
    tape->record("div", [an = a.node(), bn = b.node(), on = out.node()] {
      if (on->grad.empty()) return;
      const auto& g = on->grad;
      if (an->requires_grad) {
        auto& ga = an->ensure_grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] / bn->value[i];
      }
      if (bn->requires_grad) {
        auto& gb = bn->ensure_grad();
        for (std::size_t i = 0; i < gb.size(); ++i)
          gb[i] -= g[i] * on->value[i] / bn->value[i];
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  return detail::unary<S>(
      a, "scale", [c](S x) { return c * x; }, [c](S, S) { return c; });
}

template <class S>
Tensor<S> add_scalar(const Tensor<S>& a, S c) {
  return detail::unary<S>(
      a, "add_scalar", [c](S x) { return x + c; }, [](S, S) { return S(1); });
}

/// a * s where s is a one-element tensor broadcast over a.
template <class S>
Tensor<S> mul_scalar(const Tensor<S>& a, const Tensor<S>& s) {
  detail::require_scalar(s, "mul_scalar");
  const S k = s[0];
  Tensor<S> out(a.shape());
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * k;
  if (Tape* tape = detail::recording_tape({&a, &s})) {
    detail::mark_output(out, *tape);
    tape->record("mul_scalar", [an = a.node(), sn = s.node(), on = out.node()] {
      if (on->grad.empty()) return;
      const auto& g = on->grad;
      if (an->requires_grad) {
        auto& ga = an->ensure_grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * sn->value[0];
      }
      if (sn->requires_grad) {
        S acc = 0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * an->value[i];
        sn->ensure_grad()[0] += acc;
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> neg(const Tensor<S>& a) {
  return scale(a, S(-1));
}

template <class S>
Tensor<S> square(const Tensor<S>& a) {
  return detail::unary<S>(
      a, "square", [](S x) { return x * x; }, [](S x, S) { return S(2) * x; });
}

template <class S>
Tensor<S> exp(const Tensor<S>& a) {
  return detail::unary<S>(
      a, "exp", [](S x) { return std::exp(x); }, [](S, S y) { return y; });
}

template <class S>
Tensor<S> log(const Tensor<S>& a) {
  return detail::unary<S>(
      a, "log", [](S x) { return std::log(x); }, [](S x, S) { return S(1) / x; });
}

template <class S>
Tensor<S> log10(const Tensor<S>& a) {
  const S inv_ln10 = S(1) / std::log(S(10));
  return detail::unary<S>(
      a, "log10", [](S x) { return std::log10(x); },
      [inv_ln10](S x, S) { return inv_ln10 / x; });
}

template <class S>
Tensor<S> abs(const Tensor<S>& a) {
  return detail::unary<S>(
      a, "abs", [](S x) { return std::abs(x); },
      [](S x, S) { return x > 0 ? S(1) : (x < 0 ? S(-1) : S(0)); });
}

template <class S>
Tensor<S> sigmoid(const Tensor<S>& a) {
  return detail::unary<S>(
      a, "sigmoid", [](S x) { return S(1) / (S(1) + std::exp(-x)); },
      [](S, S y) { return y * (S(1) - y); });
}

template <class S>
Tensor<S> tanh(const Tensor<S>& a) {
  return detail::unary<S>(
      a, "tanh", [](S x) { return std::tanh(x); }, [](S, S y) { return S(1) - y * y; });
}

/// Elementwise clamp; gradient passes only where the input was inside the range.
template <class S>
Tensor<S> clamp(const Tensor<S>& a, S lo, S hi) {
  return detail::unary<S>(
      a, "clamp", [lo, hi](S x) { return std::clamp(x, lo, hi); },
      [lo, hi](S x, S) { return (x >= lo && x <= hi) ? S(1) : S(0); });
}

// ---------------------------------------------------------------------------
// Reductions

template <class S>
Tensor<S> sum(const Tensor<S>& a) {
  S acc = 0;
  for (S v : a.data()) acc += v;
  Tensor<S> out = Tensor<S>::scalar(acc);
  if (Tape* tape = detail::recording_tape({&a})) {
    detail::mark_output(out, *tape);
    tape->record("sum", [an = a.node(), on = out.node()] {
      if (on->grad.empty() || !an->requires_grad) return;
      const S g = on->grad[0];
      for (S& v : an->ensure_grad()) v += g;
    });
  }
  return out;
}

template <class S>
Tensor<S> dot(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a, b, "dot");
  S acc = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += a[i] * b[i];
  Tensor<S> out = Tensor<S>::scalar(acc);
  if (Tape* tape = detail::recording_tape({&a, &b})) {
    detail::mark_output(out, *tape);
    tape->record("dot", [an = a.node(), bn = b.node(), on = out.node()] {
      if (on->grad.empty()) return;
      const S g = on->grad[0];
      if (an->requires_grad) {
        auto& ga = an->ensure_grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * bn->value[i];
      }
      if (bn->requires_grad) {
        auto& gb = bn->ensure_grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * an->value[i];
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> sum_squares(const Tensor<S>& a) {
  return dot(a, a);
}

/// Sum of a list of same-shape tensors.
template <class S>
Tensor<S> add_n(const std::vector<Tensor<S>>& xs) {
  if (xs.empty()) throw AdError("add_n: empty list");
  Tensor<S> acc = xs.front();
  for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
  return acc;
}

// ---------------------------------------------------------------------------
// Layout

template <class S>
Tensor<S> reshape(const Tensor<S>& a, Shape shape) {
  if (numel(shape) != a.numel())
    throw AdError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  Tensor<S> out(std::move(shape), a.values());
  if (Tape* tape = detail::recording_tape({&a})) {
    detail::mark_output(out, *tape);
    tape->record("reshape", [an = a.node(), on = out.node()] {
      if (on->grad.empty()) return;
      detail::accumulate<S>(*an, on->grad);
    });
  }
  return out;
}

/// out[k] = a[index_map[k]]; the backward pass scatter-adds.
template <class S>
Tensor<S> gather(const Tensor<S>& a, Shape shape, std::vector<std::size_t> index_map,
                 std::string_view name = "gather") {
  if (numel(shape) != index_map.size()) throw AdError("gather: map size does not match shape");
  Tensor<S> out(std::move(shape));
  auto y = out.mutable_data();
  const auto x = a.data();
  for (std::size_t k = 0; k < index_map.size(); ++k) y[k] = x[index_map[k]];
  if (Tape* tape = detail::recording_tape({&a})) {
    detail::mark_output(out, *tape);
    tape->record(name, [an = a.node(), on = out.node(), map = std::move(index_map)] {
      if (on->grad.empty() || !an->requires_grad) return;
      auto& ga = an->ensure_grad();
      for (std::size_t k = 0; k < map.size(); ++k) ga[map[k]] += on->grad[k];
    });
  }
  return out;
}

/// Generic axis permutation: out.shape[i] = a.shape[axes[i]].
template <class S>
Tensor<S> permute(const Tensor<S>& a, const std::vector<std::size_t>& axes) {
  const std::size_t r = a.rank();
  if (axes.size() != r) throw AdError("permute: axes/rank mismatch");
  std::vector<bool> seen(r, false);
  for (auto ax : axes) {
    if (ax >= r || seen[ax]) throw AdError("permute: axes must be a permutation");
    seen[ax] = true;
  }
  Shape oshape(r);
  for (std::size_t i = 0; i < r; ++i) oshape[i] = a.shape()[axes[i]];
  const auto ist = detail::strides_of(a.shape());
  // src offset contributed by each output axis
  std::vector<std::size_t> src_stride(r);
  for (std::size_t i = 0; i < r; ++i) src_stride[i] = ist[axes[i]];

  const std::size_t n = a.numel();
  std::vector<std::size_t> index_map(n);
  {
    std::vector<std::size_t> idx(r, 0);
    std::size_t src = 0;
    for (std::size_t k = 0; k < n; ++k) {
      index_map[k] = src;
      for (std::size_t ax = r; ax-- > 0;) {
        if (++idx[ax] < oshape[ax]) {
          src += src_stride[ax];
          break;
        }
        src -= src_stride[ax] * (oshape[ax] - 1);
        idx[ax] = 0;
      }
    }
  }
  return gather(a, std::move(oshape), std::move(index_map), "permute");
}

/// Half-open slice [begin, end) along `axis`.
template <class S>
Tensor<S> slice(const Tensor<S>& a, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= a.rank() || begin > end || end > a.dim(axis))
    throw AdError("slice: range out of bounds for " + to_string(a.shape()));
  Shape oshape = a.shape();
  oshape[axis] = end - begin;
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const std::size_t len = a.dim(axis), w = end - begin;
  Tensor<S> out(oshape);
  auto y = out.mutable_data();
  const auto x = a.data();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(x.begin() + (o * len + begin) * inner, w * inner, y.begin() + o * w * inner);
  if (Tape* tape = detail::recording_tape({&a})) {
    detail::mark_output(out, *tape);
    tape->record("slice", [an = a.node(), on = out.node(), outer, inner, len, w, begin] {
      if (on->grad.empty() || !an->requires_grad) return;
      auto& ga = an->ensure_grad();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t k = 0; k < w * inner; ++k)
          ga[(o * len + begin) * inner + k] += on->grad[o * w * inner + k];
    });
  }
  return out;
}

/// Concatenation along `axis`; all other extents must agree.
template <class S>
Tensor<S> concat(const std::vector<Tensor<S>>& xs, std::size_t axis) {
  if (xs.empty()) throw AdError("concat: empty list");
  const Shape& ref = xs.front().shape();
  if (axis >= ref.size()) throw AdError("concat: axis out of range");
  std::size_t total = 0;
  for (const auto& t : xs) {
    if (t.rank() != ref.size()) throw AdError("concat: rank mismatch");
    for (std::size_t i = 0; i < ref.size(); ++i)
      if (i != axis && t.dim(i) != ref[i]) throw AdError("concat: extent mismatch");
    total += t.dim(axis);
  }
  Shape oshape = ref;
  oshape[axis] = total;
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= ref[i];
  for (std::size_t i = axis + 1; i < ref.size(); ++i) inner *= ref[i];
  Tensor<S> out(oshape);
  auto y = out.mutable_data();
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& t : xs) {
    offsets.push_back(off);
    const std::size_t w = t.dim(axis);
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(t.data().begin() + o * w * inner, w * inner,
                  y.begin() + (o * total + off) * inner);
    off += w;
  }
  if (Tape* tape = detail::recording_tape(xs)) {
    detail::mark_output(out, *tape);
    std::vector<std::shared_ptr<Node<S>>> nodes;
    for (const auto& t : xs) nodes.push_back(t.node());
    tape->record("concat", [nodes, on = out.node(), offsets, outer, inner, total, axis] {
      if (on->grad.empty()) return;
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        auto& n = *nodes[k];
        if (!n.requires_grad) continue;
        auto& g = n.ensure_grad();
        const std::size_t w = n.shape[axis];
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t j = 0; j < w * inner; ++j)
            g[o * w * inner + j] += on->grad[(o * total + offsets[k]) * inner + j];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra

/// op(a) * op(b) for 2-D tensors, op = optional transpose.
template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b, bool trans_a = false,
                 bool trans_b = false) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const std::size_t m = trans_a ? a.dim(1) : a.dim(0);
  const std::size_t k = trans_a ? a.dim(0) : a.dim(1);
  const std::size_t kb = trans_b ? b.dim(1) : b.dim(0);
  const std::size_t n = trans_b ? b.dim(0) : b.dim(1);
  if (k != kb)
    throw AdError("matmul: inner extents differ " + to_string(a.shape()) + " x " +
                  to_string(b.shape()));
  Tensor<S> out(Shape{m, n});
  CMapR<S> A(a.data().data(), a.dim(0), a.dim(1));
  CMapR<S> B(b.data().data(), b.dim(0), b.dim(1));
  MapR<S> Y(out.mutable_data().data(), m, n);
  if (!trans_a && !trans_b) Y.noalias() = A * B;
  else if (trans_a && !trans_b) Y.noalias() = A.transpose() * B;
  else if (!trans_a && trans_b) Y.noalias() = A * B.transpose();
  else Y.noalias() = A.transpose() * B.transpose();
  if (Tape* tape = detail::recording_tape({&a, &b})) {
    detail::mark_output(out, *tape);
    tape->record("matmul", [an = a.node(), bn = b.node(), on = out.node(), trans_a, trans_b,
                            m, n] {
      if (on->grad.empty()) return;
      CMapR<S> G(on->grad.data(), m, n);
      CMapR<S> A(an->value.data(), an->shape[0], an->shape[1]);
      CMapR<S> B(bn->value.data(), bn->shape[0], bn->shape[1]);
      if (an->requires_grad) {
        MapR<S> GA(an->ensure_grad().data(), an->shape[0], an->shape[1]);
        // Y = opA(A) opB(B)  =>  d opA(A) = G opB(B)^T
        if (!trans_a) {
          if (!trans_b) GA.noalias() += G * B.transpose();
          else GA.noalias() += G * B;
        } else {
          if (!trans_b) GA.noalias() += B * G.transpose();
          else GA.noalias() += B.transpose() * G.transpose();
        }
      }
      if (bn->requires_grad) {
        MapR<S> GB(bn->ensure_grad().data(), bn->shape[0], bn->shape[1]);
        if (!trans_b) {
          if (!trans_a) GB.noalias() += A.transpose() * G;
          else GB.noalias() += A * G;
        } else {
          if (!trans_a) GB.noalias() += G.transpose() * A;
          else GB.noalias() += G.transpose() * A.transpose();
        }
      }
    });
  }
  return out;
}

}  // namespace gridsep::ad
