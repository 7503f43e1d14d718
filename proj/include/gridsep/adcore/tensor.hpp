// gridsep/adcore/tensor.hpp

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

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace gridsep::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>{});
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/// Thrown for any shape, argument or graph misuse detected by an op.
class AdError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Storage with a fixed 64-byte alignment. Eigen's vectorized kernels peel
/// loops according to the address, so a fixed alignment keeps results
/// independent of where the allocator happens to place a buffer.
template <class S>
using Buffer = std::vector<S, Eigen::aligned_allocator<S>>;

template <class S>
struct Node {
  Shape shape;
  Buffer<S> value;
  Buffer<S> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  std::uint64_t tape_id = 0;  // 0 for leaves

  Buffer<S>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), S(0));
    return grad;
  }
};

/// Dense row-major n-dimensional array with an optional gradient slot.
///
/// A Tensor is a shared handle: copies alias the same storage, which is what
/// lets a parameter be referenced from both a model and an optimizer.
template <class S>
class Tensor {
 public:
  using Scalar = S;

  Tensor() : node_(std::make_shared<Node<S>>()) {}

  explicit Tensor(Shape shape, S fill = S(0)) : node_(std::make_shared<Node<S>>()) {
    node_->value.assign(ad::numel(shape), fill);
    node_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<S> values) : node_(std::make_shared<Node<S>>()) {
    if (ad::numel(shape) != values.size())
      throw AdError("tensor: shape " + to_string(shape) + " does not match " +
                    std::to_string(values.size()) + " values");
    node_->shape = std::move(shape);
    node_->value.assign(values.begin(), values.end());
  }

  static Tensor parameter(Shape shape, std::vector<S> values) {
    Tensor t(std::move(shape), std::move(values));
    t.node_->requires_grad = true;
    return t;
  }

  static Tensor scalar(S v) { return Tensor(Shape{1}, std::vector<S>{v}); }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const S> data() const { return node_->value; }
  std::span<S> mutable_data() { return node_->value; }
  std::vector<S> values() const { return {node_->value.begin(), node_->value.end()}; }

  std::span<const S> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<S> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool is_leaf() const { return node_->tape_id == 0; }

  S item() const {
    if (numel() != 1) throw AdError("item: tensor " + to_string(shape()) + " is not scalar");
    return node_->value[0];
  }

  S operator[](std::size_t i) const { return node_->value[i]; }

  /// Same values, no gradient history.
  Tensor detach() const { return Tensor(shape(), values()); }

  const std::shared_ptr<Node<S>>& node() const { return node_; }

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

 private:
  std::shared_ptr<Node<S>> node_;
};

/// Returns false and names the first offending index when a value is NaN/Inf.
template <class S>
bool all_finite(const Tensor<S>& t, std::size_t* bad_index = nullptr) {
  const auto v = t.data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      if (bad_index) *bad_index = i;
      return false;
    }
  }
  return true;
}

template <class S>
void check_finite(const Tensor<S>& t, std::string_view what) {
  std::size_t idx = 0;
  if (!all_finite(t, &idx))
    throw AdError(std::string(what) + ": non-finite value at flat index " + std::to_string(idx));
}

/// Ordered record of differentiable operations.
///
/// Ops record onto the tape made active by a TapeScope on the current thread.
/// backward() walks the records in reverse, so every node is visited exactly
/// once and after all of its consumers.
class Tape {
 public:
  struct Record {
    std::string_view op;
    std::function<void()> backward;
  };

  Tape() : id_(next_id()) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::uint64_t id() const { return id_; }
  std::size_t size() const { return records_.size(); }
  const std::vector<Record>& records() const { return records_; }

  void record(std::string_view op, std::function<void()> fn) {
    if (consumed_) throw AdError("tape: cannot record after backward()");
    records_.push_back({op, std::move(fn)});
  }

  /// Seeds d loss / d loss = 1 and propagates to every reachable leaf.
  template <class S>
  void backward(const Tensor<S>& loss) {
    if (loss.numel() != 1)
      throw AdError("backward: loss must be scalar, got shape " + to_string(loss.shape()));
    if (loss.node()->tape_id != id_)
      throw AdError("backward: loss was not produced on this tape");
    if (consumed_) throw AdError("backward: tape already consumed");
    consumed_ = true;
    loss.node()->ensure_grad()[0] += S(1);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) it->backward();
    records_.clear();
  }

  void clear() {
    records_.clear();
    consumed_ = false;
  }

 private:
  static std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
  }

  std::uint64_t id_;
  bool consumed_ = false;
  std::vector<Record> records_;
};

namespace detail {
inline Tape*& active_tape() {
  thread_local Tape* tape = nullptr;
  return tape;
}
}  // namespace detail

/// Makes `tape` the recording target on this thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape) : previous_(detail::active_tape()) {
    detail::active_tape() = &tape;
  }
  ~TapeScope() { detail::active_tape() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Disables recording for the scope (inference).
class NoGradScope {
 public:
  NoGradScope() : previous_(detail::active_tape()) { detail::active_tape() = nullptr; }
  ~NoGradScope() { detail::active_tape() = previous_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

namespace detail {

/// The tape an op should record on, or nullptr when nothing needs gradients.
template <class S>
Tape* recording_tape(std::initializer_list<const Tensor<S>*> inputs) {
  Tape* tape = active_tape();
  if (!tape) return nullptr;
  bool any = false;
  for (const Tensor<S>* t : inputs) {
    if (!t) continue;
    const auto& n = *t->node();
    if (n.tape_id != 0 && n.tape_id != tape->id())
      throw AdError("tensor produced on another tape used in a new graph");
    any = any || n.requires_grad;
  }
  return any ? tape : nullptr;
}

template <class S>
Tape* recording_tape(const std::vector<Tensor<S>>& inputs) {
  Tape* tape = active_tape();
  if (!tape) return nullptr;
  bool any = false;
  for (const auto& t : inputs) {
    const auto& n = *t.node();
    if (n.tape_id != 0 && n.tape_id != tape->id())
      throw AdError("tensor produced on another tape used in a new graph");
    any = any || n.requires_grad;
  }
  return any ? tape : nullptr;
}

template <class S>
void mark_output(Tensor<S>& out, const Tape& tape) {
  out.node()->requires_grad = true;
  out.node()->tape_id = tape.id();
}

/// Adds `src` into the gradient of `n` when it participates in the graph.
template <class S>
void accumulate(Node<S>& n, std::span<const S> src) {
  if (!n.requires_grad) return;
  auto& g = n.ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i];
}

}  // namespace detail

}  // namespace gridsep::ad
