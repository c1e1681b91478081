/* Copyright 2026 The AVFG Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

// Dense row-major N-d tensor with reverse-mode automatic differentiation.
//
// A Tensor<T> is a cheap handle onto shared storage. Operations are free
// functions that take an optional Tape<T>*; when a tape is supplied and an
// input requires gradients, the op appends a backward rule to the tape.
// Tape::backward walks the recorded ops once, in reverse order, which is a
// valid topological order because ops are appended as values are produced.
//
// There is no implicit broadcasting: binary elementwise ops demand identical
// shapes, and scalar-vs-tensor coercion goes through the explicit
// broadcast_scalar op. Gradients of leaf tensors accumulate additively across
// backward calls until zero_grad is called; gradients of tensors produced on
// the tape are reset at the start of every backward pass.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace avfg {

using Shape = std::vector<std::size_t>;

/// Raised on any rank/extent disagreement; the message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) {
    if (e == 0) throw ShapeError("zero extent in shape " + shape_str(s));
    n *= e;
  }
  return n;
}

template <typename T>
class Tensor {
  struct Storage {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty unless requires_grad
    bool requires_grad = false;
  };

 public:
  Tensor() : s_(std::make_shared<Storage>()) { s_->shape = {1}; s_->value = {T(0)}; }

  static Tensor zeros(const Shape& shape) {
    Tensor t;
    t.s_->shape = shape;
    t.s_->value.assign(shape_numel(shape), T(0));
    return t;
  }

  static Tensor full(const Shape& shape, T v) {
    Tensor t = zeros(shape);
    std::fill(t.s_->value.begin(), t.s_->value.end(), v);
    return t;
  }

  static Tensor from(const Shape& shape, std::vector<T> data) {
    if (data.size() != shape_numel(shape))
      throw ShapeError("data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    Tensor t;
    t.s_->shape = shape;
    t.s_->value = std::move(data);
    return t;
  }

  static Tensor scalar(T v) { return from({1}, {v}); }

  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t extent(std::size_t axis) const { return s_->shape.at(axis); }
  std::size_t numel() const { return s_->value.size(); }

  T* data() { return s_->value.data(); }
  const T* data() const { return s_->value.data(); }
  T& operator[](std::size_t i) { return s_->value[i]; }
  const T& operator[](std::size_t i) const { return s_->value[i]; }

  /// Multi-index access (row-major).
  T& at(std::initializer_list<std::size_t> idx) { return s_->value[offset(idx)]; }
  const T& at(std::initializer_list<std::size_t> idx) const {
    return s_->value[offset(idx)];
  }

  bool requires_grad() const { return s_->requires_grad; }

  Tensor& set_requires_grad(bool on) {
    s_->requires_grad = on;
    if (on)
      s_->grad.assign(numel(), T(0));
    else
      s_->grad.clear();
    return *this;
  }

  T* grad() { return s_->grad.data(); }
  const T* grad() const { return s_->grad.data(); }
  std::vector<T>& grad_vec() { return s_->grad; }

  void zero_grad() {
    if (s_->requires_grad) std::fill(s_->grad.begin(), s_->grad.end(), T(0));
  }

  /// Value of a single-element tensor.
  T item() const {
    if (numel() != 1)
      throw ShapeError("item() on non-scalar tensor of shape " + shape_str(shape()));
    return s_->value[0];
  }

  bool all_finite() const {
    for (T v : s_->value)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  /// Deep copy of values; gradient state is not copied.
  Tensor clone() const { return from(shape(), s_->value); }

  bool same_storage(const Tensor& o) const { return s_ == o.s_; }
  const void* storage_id() const { return s_.get(); }

 private:
  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != rank())
      throw ShapeError("index rank " + std::to_string(idx.size()) +
                       " vs tensor shape " + shape_str(shape()));
    std::size_t off = 0, axis = 0;
    for (std::size_t i : idx) {
      off = off * s_->shape[axis] + i;
      ++axis;
    }
    return off;
  }

  std::shared_ptr<Storage> s_;
};

/// A tensor paired with its parameter/state name (checkpoints, optimizers).
template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

/// Records backward rules in execution order and replays them in reverse.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(const Tensor<T>& output, BackwardFn fn) {
    nodes_.push_back(Node{output, std::move(fn)});
  }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  /// Seeds d(root)/d(root)=1 and visits every recorded op exactly once.
  /// Gradients of tape-produced tensors are reset first, so a repeated
  /// backward over the same tape reproduces the same leaf contributions.
  void backward(Tensor<T> root) {
    if (root.numel() != 1)
      throw ShapeError("backward root must be scalar, got shape " +
                       shape_str(root.shape()));
    if (!root.requires_grad())
      throw std::invalid_argument("backward through a detached tensor");
    bool on_tape = false;
    for (const Node& n : nodes_)
      if (n.output.same_storage(root)) {
        on_tape = true;
        break;
      }
    if (!on_tape)
      throw std::invalid_argument("backward root was not produced on this tape");
    for (Node& n : nodes_) n.output.zero_grad();
    root.grad()[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->back();
  }

 private:
  struct Node {
    Tensor<T> output;
    BackwardFn back;
  };
  std::vector<Node> nodes_;
};

namespace detail {

template <typename T>
inline void require_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                               const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
}

template <typename T>
inline bool track(const Tape<T>* tape, std::initializer_list<const Tensor<T>*> ins) {
  if (!tape) return false;
  for (const Tensor<T>* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic (identical shapes).

enum class EwOp { add, subtract, multiply, divide };

template <typename T>
Tensor<T> elementwise(EwOp kind, const Tensor<T>& a, const Tensor<T>& b,
                      Tape<T>* tape) {
  detail::require_same_shape(a, b, "elementwise");
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const std::size_t n = out.numel();
  switch (kind) {
    case EwOp::add:
      for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
      break;
    case EwOp::subtract:
      for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
      break;
    case EwOp::multiply:
      for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
      break;
    case EwOp::divide:
      for (std::size_t i = 0; i < n; ++i) out[i] = a[i] / b[i];
      break;
  }
  if (detail::track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor<T> ac = a, bc = b, oc = out;
    tape->record(out, [kind, ac, bc, oc]() mutable {
      const T* g = oc.grad();
      const std::size_t n = oc.numel();
      switch (kind) {
        case EwOp::add:
          if (ac.requires_grad())
            for (std::size_t i = 0; i < n; ++i) ac.grad()[i] += g[i];
          if (bc.requires_grad())
            for (std::size_t i = 0; i < n; ++i) bc.grad()[i] += g[i];
          break;
        case EwOp::subtract:
          if (ac.requires_grad())
            for (std::size_t i = 0; i < n; ++i) ac.grad()[i] += g[i];
          if (bc.requires_grad())
            for (std::size_t i = 0; i < n; ++i) bc.grad()[i] -= g[i];
          break;
        case EwOp::multiply:
          if (ac.requires_grad())
            for (std::size_t i = 0; i < n; ++i) ac.grad()[i] += g[i] * bc[i];
          if (bc.requires_grad())
            for (std::size_t i = 0; i < n; ++i) bc.grad()[i] += g[i] * ac[i];
          break;
        case EwOp::divide:
          if (ac.requires_grad())
            for (std::size_t i = 0; i < n; ++i) ac.grad()[i] += g[i] / bc[i];
          if (bc.requires_grad())
            for (std::size_t i = 0; i < n; ++i)
              bc.grad()[i] -= g[i] * ac[i] / (bc[i] * bc[i]);
          break;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr) {
  return elementwise(EwOp::add, a, b, tape);
}
template <typename T>
Tensor<T> subtract(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr) {
  return elementwise(EwOp::subtract, a, b, tape);
}
template <typename T>
Tensor<T> multiply(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr) {
  return elementwise(EwOp::multiply, a, b, tape);
}
template <typename T>
Tensor<T> divide(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr) {
  return elementwise(EwOp::divide, a, b, tape);
}

/// out = a * c for a plain constant (no gradient w.r.t. c).
template <typename T>
Tensor<T> mul_const(const Tensor<T>& a, T c, Tape<T>* tape = nullptr) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * c;
  if (detail::track(tape, {&a})) {
    out.set_requires_grad(true);
    Tensor<T> ac = a, oc = out;
    tape->record(out, [c, ac, oc]() mutable {
      for (std::size_t i = 0; i < oc.numel(); ++i) ac.grad()[i] += oc.grad()[i] * c;
    });
  }
  return out;
}

/// out = a + c for a plain constant.
template <typename T>
Tensor<T> add_const(const Tensor<T>& a, T c, Tape<T>* tape = nullptr) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + c;
  if (detail::track(tape, {&a})) {
    out.set_requires_grad(true);
    Tensor<T> ac = a, oc = out;
    tape->record(out, [ac, oc]() mutable {
      for (std::size_t i = 0; i < oc.numel(); ++i) ac.grad()[i] += oc.grad()[i];
    });
  }
  return out;
}

/// Explicit scalar-to-shape broadcast; gradient sums back into the scalar.
template <typename T>
Tensor<T> broadcast_scalar(const Tensor<T>& s, const Shape& shape,
                           Tape<T>* tape = nullptr) {
  if (s.numel() != 1)
    throw ShapeError("broadcast_scalar expects a scalar, got shape " +
                     shape_str(s.shape()));
  Tensor<T> out = Tensor<T>::full(shape, s.item());
  if (detail::track(tape, {&s})) {
    out.set_requires_grad(true);
    Tensor<T> sc = s, oc = out;
    tape->record(out, [sc, oc]() mutable {
      T acc = T(0);
      for (std::size_t i = 0; i < oc.numel(); ++i) acc += oc.grad()[i];
      sc.grad()[0] += acc;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dot product of two rank-1 tensors.

template <typename T>
Tensor<T> matvec_dot(const Tensor<T>& u, const Tensor<T>& v, Tape<T>* tape = nullptr) {
  if (u.rank() != 1 || v.rank() != 1)
    throw ShapeError("matvec_dot expects rank-1 inputs, got " +
                     shape_str(u.shape()) + " and " + shape_str(v.shape()));
  if (u.numel() != v.numel())
    throw ShapeError("matvec_dot length mismatch " + shape_str(u.shape()) + " vs " +
                     shape_str(v.shape()));
  T acc = T(0);
  for (std::size_t i = 0; i < u.numel(); ++i) acc += u[i] * v[i];
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (detail::track(tape, {&u, &v})) {
    out.set_requires_grad(true);
    Tensor<T> uc = u, vc = v, oc = out;
    tape->record(out, [uc, vc, oc]() mutable {
      const T g = oc.grad()[0];
      if (uc.requires_grad())
        for (std::size_t i = 0; i < uc.numel(); ++i) uc.grad()[i] += g * vc[i];
      if (vc.requires_grad())
        for (std::size_t i = 0; i < vc.numel(); ++i) vc.grad()[i] += g * uc[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape manipulation. All of these copy; gradient flow is exact.

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, const Shape& shape, Tape<T>* tape = nullptr) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape) +
                     ": element count changes");
  Tensor<T> out = Tensor<T>::from(shape, std::vector<T>(a.data(), a.data() + a.numel()));
  if (detail::track(tape, {&a})) {
    out.set_requires_grad(true);
    Tensor<T> ac = a, oc = out;
    tape->record(out, [ac, oc]() mutable {
      for (std::size_t i = 0; i < oc.numel(); ++i) ac.grad()[i] += oc.grad()[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> flatten(const Tensor<T>& a, Tape<T>* tape = nullptr) {
  return reshape(a, Shape{a.numel()}, tape);
}

namespace detail {
inline std::vector<std::size_t> row_major_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}
}  // namespace detail

/// Axis permutation (generalized transpose).
template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& axes,
                  Tape<T>* tape = nullptr) {
  const std::size_t r = a.rank();
  if (axes.size() != r) throw ShapeError("permute: axes rank mismatch");
  std::vector<bool> seen(r, false);
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (axes[i] >= r || seen[axes[i]]) throw ShapeError("permute: invalid axes");
    seen[axes[i]] = true;
    out_shape[i] = a.shape()[axes[i]];
  }
  const auto in_st = detail::row_major_strides(a.shape());
  const auto out_st = detail::row_major_strides(out_shape);
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  // mapping[i] = linear index into a for out linear index i
  std::vector<std::size_t> mapping(a.numel());
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t o = 0; o < out.numel(); ++o) {
    std::size_t rem = o, src = 0;
    for (std::size_t d = 0; d < r; ++d) {
      const std::size_t coord = rem / out_st[d];
      rem %= out_st[d];
      src += coord * in_st[axes[d]];
    }
    mapping[o] = src;
    out[o] = a[src];
  }
  if (detail::track(tape, {&a})) {
    out.set_requires_grad(true);
    Tensor<T> ac = a, oc = out;
    tape->record(out, [ac, oc, mapping]() mutable {
      for (std::size_t o = 0; o < oc.numel(); ++o)
        ac.grad()[mapping[o]] += oc.grad()[o];
    });
  }
  return out;
}

/// Contiguous sub-block copy; one [begin,end) pair per axis.
template <typename T>
Tensor<T> slice(const Tensor<T>& a,
                const std::vector<std::pair<std::size_t, std::size_t>>& ranges,
                Tape<T>* tape = nullptr) {
  const std::size_t r = a.rank();
  if (ranges.size() != r) throw ShapeError("slice: one range per axis required");
  Shape out_shape(r);
  for (std::size_t d = 0; d < r; ++d) {
    const auto [b, e] = ranges[d];
    if (b >= e || e > a.shape()[d])
      throw ShapeError("slice: range [" + std::to_string(b) + "," + std::to_string(e) +
                       ") out of bounds for axis " + std::to_string(d) + " of " +
                       shape_str(a.shape()));
    out_shape[d] = e - b;
  }
  const auto in_st = detail::row_major_strides(a.shape());
  const auto out_st = detail::row_major_strides(out_shape);
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  std::vector<std::size_t> mapping(out.numel());
  for (std::size_t o = 0; o < out.numel(); ++o) {
    std::size_t rem = o, src = 0;
    for (std::size_t d = 0; d < r; ++d) {
      const std::size_t coord = rem / out_st[d];
      rem %= out_st[d];
      src += (coord + ranges[d].first) * in_st[d];
    }
    mapping[o] = src;
    out[o] = a[src];
  }
  if (detail::track(tape, {&a})) {
    out.set_requires_grad(true);
    Tensor<T> ac = a, oc = out;
    tape->record(out, [ac, oc, mapping]() mutable {
      for (std::size_t o = 0; o < oc.numel(); ++o)
        ac.grad()[mapping[o]] += oc.grad()[o];
    });
  }
  return out;
}

/// Concatenate along an axis; all other extents must agree.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis,
                 Tape<T>* tape = nullptr) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const std::size_t r = parts[0].rank();
  if (axis >= r) throw ShapeError("concat: axis out of range");
  Shape out_shape = parts[0].shape();
  for (std::size_t p = 1; p < parts.size(); ++p) {
    if (parts[p].rank() != r)
      throw ShapeError("concat: rank mismatch " + shape_str(parts[p].shape()) +
                       " vs " + shape_str(parts[0].shape()));
    for (std::size_t d = 0; d < r; ++d)
      if (d != axis && parts[p].shape()[d] != out_shape[d])
        throw ShapeError("concat: extent mismatch on axis " + std::to_string(d) +
                         ": " + shape_str(parts[p].shape()) + " vs " +
                         shape_str(parts[0].shape()));
    out_shape[axis] += parts[p].shape()[axis];
  }
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  // outer = product of extents before axis, inner = product after
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= out_shape[d];
  for (std::size_t d = axis + 1; d < r; ++d) inner *= out_shape[d];
  std::size_t axis_off = 0;
  bool need_grad = false;
  for (const auto& p : parts)
    if (tape && p.requires_grad()) need_grad = true;
  std::vector<std::size_t> offsets;  // per part, start extent on axis
  for (const auto& p : parts) {
    const std::size_t pa = p.shape()[axis];
    for (std::size_t u = 0; u < outer; ++u)
      for (std::size_t x = 0; x < pa; ++x)
        std::copy(p.data() + (u * pa + x) * inner, p.data() + (u * pa + x + 1) * inner,
                  out.data() + (u * out_shape[axis] + axis_off + x) * inner);
    offsets.push_back(axis_off);
    axis_off += pa;
  }
  if (need_grad) {
    out.set_requires_grad(true);
    Tensor<T> oc = out;
    std::vector<Tensor<T>> pc = parts;
    const std::size_t out_axis = out_shape[axis];
    tape->record(out, [oc, pc, offsets, outer, inner, axis, out_axis]() mutable {
      for (std::size_t p = 0; p < pc.size(); ++p) {
        if (!pc[p].requires_grad()) continue;
        const std::size_t pa = pc[p].shape()[axis];
        for (std::size_t u = 0; u < outer; ++u)
          for (std::size_t x = 0; x < pa; ++x) {
            const T* g = oc.grad() + (u * out_axis + offsets[p] + x) * inner;
            T* dst = pc[p].grad() + (u * pa + x) * inner;
            for (std::size_t i = 0; i < inner; ++i) dst[i] += g[i];
          }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions to scalar.

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& a, Tape<T>* tape = nullptr) {
  T acc = T(0);
  for (std::size_t i = 0; i < a.numel(); ++i) acc += a[i];
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (detail::track(tape, {&a})) {
    out.set_requires_grad(true);
    Tensor<T> ac = a, oc = out;
    tape->record(out, [ac, oc]() mutable {
      const T g = oc.grad()[0];
      for (std::size_t i = 0; i < ac.numel(); ++i) ac.grad()[i] += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& a, Tape<T>* tape = nullptr) {
  const T inv = T(1) / static_cast<T>(a.numel());
  T acc = T(0);
  for (std::size_t i = 0; i < a.numel(); ++i) acc += a[i];
  Tensor<T> out = Tensor<T>::scalar(acc * inv);
  if (detail::track(tape, {&a})) {
    out.set_requires_grad(true);
    Tensor<T> ac = a, oc = out;
    tape->record(out, [ac, oc, inv]() mutable {
      const T g = oc.grad()[0] * inv;
      for (std::size_t i = 0; i < ac.numel(); ++i) ac.grad()[i] += g;
    });
  }
  return out;
}

}  // namespace avfg
